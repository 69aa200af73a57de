#![allow(dead_code)]

use std::collections::BTreeMap;

use dormalloc::drf::{self, DrfMode};
use dormalloc::metrics;
use dormalloc::optimizer::{self, build_problem, FairnessBudgetMode, MilpProblem, Theta};
use dormalloc::{
    containers_of, AllocationMatrix, AppId, ApplicationSpec, ClusterSpec, Rational,
    ResourceVector, Slave, SlaveId, WorkloadProfile,
};
use num_traits::Signed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(n.into())
}

pub fn theta(text: &str) -> Theta {
    Theta::parse(text).unwrap()
}

pub fn app(id: &str, demand: &[u64], weight: u32, n_min: u32, n_max: u32) -> ApplicationSpec {
    ApplicationSpec {
        id: AppId::new(id),
        app_type: "test".into(),
        executor: "test".into(),
        demand: ResourceVector::from_units(demand),
        weight,
        n_max,
        n_min,
        profile: WorkloadProfile {
            total_work: int(3600),
            per_container_rate: int(1),
            checkpoint_save_cost: int(120),
            resume_cost: int(120),
        },
    }
}

pub fn cluster(caps: &[Vec<u64>]) -> ClusterSpec {
    let names = ["cpu", "gpu", "ram", "disk"][..caps[0].len()]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let slaves = caps
        .iter()
        .enumerate()
        .map(|(i, c)| Slave {
            id: SlaveId::new(format!("s{}", i + 1)),
            capacity: ResourceVector::from_units(c),
        })
        .collect();
    ClusterSpec::new(names, slaves).unwrap()
}

/// A small random reallocation instance: cluster, running applications, a
/// previous placement and both tolerances.
#[derive(Debug, Clone)]
pub struct Instance {
    pub cluster: ClusterSpec,
    pub apps: Vec<ApplicationSpec>,
    pub prev: AllocationMatrix,
    pub theta1: Theta,
    pub theta2: Theta,
}

impl Instance {
    pub fn problem(&self) -> MilpProblem {
        let hat = drf::theoretical_shares(&self.apps, &self.cluster, DrfMode::Weighted);
        build_problem(
            &self.apps,
            &self.cluster,
            &self.prev,
            &hat,
            self.theta1.clone(),
            self.theta2.clone(),
            FairnessBudgetMode::Ceiling,
        )
        .unwrap()
    }
}

const THETAS: [&str; 6] = ["0", "0.1", "0.2", "0.25", "0.5", "1"];

/// Random instance with `m = 3`, at most 3 slaves, 4 applications and
/// `n_max <= 4`. `n_max` values shrink if enumeration would exceed the
/// brute-force limit.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let slaves = rng.random_range(1..=3);
    let caps: Vec<Vec<u64>> = (0..slaves)
        .map(|_| {
            vec![
                rng.random_range(4..=12),
                rng.random_range(0..=3),
                rng.random_range(8..=48),
            ]
        })
        .collect();
    let mut caps = caps;
    if caps.iter().all(|c| c[1] == 0) {
        caps[0][1] = 1;
    }
    let cluster = cluster(&caps);
    let n_apps = rng.random_range(1..=4);
    let mut apps: Vec<ApplicationSpec> = (0..n_apps)
        .map(|i| {
            let demand = [
                rng.random_range(1..=3),
                if rng.random_bool(0.3) { 1 } else { 0 },
                rng.random_range(1..=8),
            ];
            let n_max = rng.random_range(1..=4);
            let n_min = rng.random_range(1..=n_max.min(2));
            app(&format!("a{i}"), &demand, rng.random_range(1..=3), n_min, n_max)
        })
        .collect();

    let mut prev = AllocationMatrix::new();
    let mut used = vec![vec![0u64; 3]; slaves];
    for a in &apps {
        if !rng.random_bool(0.6) {
            continue;
        }
        let want = rng.random_range(1..=a.n_max);
        for _ in 0..want {
            let j = rng.random_range(0..slaves);
            let fits = (0..3).all(|k| used[j][k] + a.demand.get(k) <= caps[j][k] * 1000);
            if fits {
                for (k, u) in used[j].iter_mut().enumerate() {
                    *u += a.demand.get(k);
                }
                let s = SlaveId::new(format!("s{}", j + 1));
                let n = prev.get(&a.id, &s);
                prev.set(a.id.clone(), s, n + 1);
            }
        }
    }

    let mut inst = Instance {
        cluster,
        apps: apps.clone(),
        prev,
        // A zero fairness tolerance leaves almost every instance infeasible.
        theta1: theta(THETAS[rng.random_range(1..THETAS.len())]),
        theta2: theta(THETAS[rng.random_range(0..THETAS.len())]),
    };
    while optimizer::enumeration_size(&inst.problem()) > optimizer::BRUTE_FORCE_LIMIT {
        let i = (0..apps.len()).max_by_key(|&i| (apps[i].n_max, i)).unwrap();
        apps[i].n_max -= 1;
        apps[i].n_min = apps[i].n_min.min(apps[i].n_max);
        inst.apps = apps.clone();
    }
    inst
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Re-evaluates every constraint of a returned placement in exact
/// arithmetic from the definitions: capacity, container bounds, the fairness
/// budget over all applications and the adjustment budget over carryover
/// applications. Returns the first violation found.
pub fn exact_violation(inst: &Instance, x: &AllocationMatrix) -> Option<String> {
    if let Err(e) = x.check_capacity(&inst.cluster, &inst.apps) {
        return Some(format!("capacity: {e}"));
    }
    for a in &inst.apps {
        let n = containers_of(x, &a.id);
        if n < u64::from(a.n_min) || n > u64::from(a.n_max) {
            return Some(format!("{} holds {n} containers outside [{}, {}]", a.id, a.n_min, a.n_max));
        }
    }
    let m = inst.cluster.num_resources();
    let carry = metrics::carryover_apps(&inst.prev, inst.apps.iter().map(|a| &a.id));
    let (b1, b2) = optimizer::budgets(
        &inst.theta1,
        &inst.theta2,
        m,
        carry.len(),
        FairnessBudgetMode::Ceiling,
    );
    let loss = metrics::fairness_loss(x, &inst.apps, &inst.cluster, DrfMode::Weighted).unwrap();
    if loss > b1 {
        return Some(format!("fairness loss {loss} exceeds {b1}"));
    }
    let overhead = metrics::adjustment_overhead(&inst.prev, x, &carry);
    if overhead > b2 {
        return Some(format!("{overhead} adjusted applications exceed {b2}"));
    }
    None
}

/// `|s_i - ŝ_i|` for every application under placement `x`.
pub fn exact_losses(inst: &Instance, x: &AllocationMatrix) -> BTreeMap<AppId, Rational> {
    let hat = drf::theoretical_shares(&inst.apps, &inst.cluster, DrfMode::Weighted);
    inst.apps
        .iter()
        .map(|a| {
            let s = drf::actual_dominant_share(a, x, &inst.cluster).unwrap();
            (a.id.clone(), (s - &hat[&a.id]).abs())
        })
        .collect()
}
