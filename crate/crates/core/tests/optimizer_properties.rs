mod common;

use common::{exact_losses, exact_violation, random_instance, rng, theta, Instance};
use dormalloc::metrics;
use dormalloc::optimizer::{self, brute_force, solve, AllocatorConfig, SolveBudget, SolveStatus};
use proptest::prelude::*;

fn instance(seed: u64) -> Instance {
    random_instance(&mut rng(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_objective_matches_enumeration(seed in any::<u64>()) {
        let inst = instance(seed);
        let p = inst.problem();
        let fast = solve(&p, &SolveBudget::unlimited());
        let slow = brute_force(&p).unwrap();
        prop_assert_eq!(fast.status.has_solution(), slow.status.has_solution());
        if slow.status.has_solution() {
            prop_assert_eq!(fast.status, SolveStatus::Optimal);
            prop_assert_eq!(&fast.objective, &slow.objective);
        } else {
            prop_assert_eq!(fast.status, SolveStatus::Infeasible);
        }
    }

    #[test]
    fn returned_placements_satisfy_constraints_exactly(seed in any::<u64>()) {
        let inst = instance(seed);
        let sol = solve(&inst.problem(), &SolveBudget::unlimited());
        if sol.status.has_solution() {
            prop_assert_eq!(exact_violation(&inst, &sol.x), None);
            let (util, _) = metrics::utilization(&sol.x, &inst.apps, &inst.cluster).unwrap();
            prop_assert_eq!(&sol.objective, &util);
        }
    }

    #[test]
    fn reported_losses_bound_share_deviation(seed in any::<u64>()) {
        let inst = instance(seed);
        let sol = solve(&inst.problem(), &SolveBudget::unlimited());
        if sol.status.has_solution() {
            for (id, dev) in exact_losses(&inst, &sol.x) {
                prop_assert!(sol.l[&id] >= dev);
            }
        }
    }

    #[test]
    fn looser_tolerances_never_lower_the_optimum(seed in any::<u64>()) {
        let inst = instance(seed);
        let base = solve(&inst.problem(), &SolveBudget::unlimited());
        for (t1, t2) in [(theta("1"), inst.theta2.clone()), (inst.theta1.clone(), theta("1"))] {
            let looser = Instance {
                theta1: t1,
                theta2: t2,
                ..inst.clone()
            };
            let wide = solve(&looser.problem(), &SolveBudget::unlimited());
            if base.status.has_solution() {
                prop_assert!(wide.status.has_solution());
                prop_assert!(wide.objective >= base.objective);
            }
        }
    }

    #[test]
    fn solving_is_deterministic(seed in any::<u64>()) {
        let inst = instance(seed);
        let p = inst.problem();
        let a = solve(&p, &SolveBudget::nodes(50));
        let b = solve(&p, &SolveBudget::nodes(50));
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.x, b.x);
        prop_assert_eq!(a.l, b.l);
        prop_assert_eq!(a.r, b.r);
        prop_assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn fallback_placement_stays_within_capacity(seed in any::<u64>()) {
        let inst = instance(seed);
        // Drop one application to mimic a completion between events.
        let running = &inst.apps[..inst.apps.len().saturating_sub(1).max(1)];
        let config = AllocatorConfig::new(inst.theta1.clone(), inst.theta2.clone());
        let out = optimizer::allocate_detailed(running, &inst.cluster, &inst.prev, &config);
        prop_assert!(out.allocation.check_capacity(&inst.cluster, running).is_ok());
        if out.fell_back {
            let kept = inst.prev.restricted(|a| running.iter().any(|s| &s.id == a));
            prop_assert_eq!(out.allocation, kept);
        }
    }
}
