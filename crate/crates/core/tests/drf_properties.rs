mod common;

use common::{app, cluster, int};
use dormalloc::drf::{self, DrfMode};
use dormalloc::{total_capacity, ApplicationSpec, ClusterSpec, Rational};
use num_bigint::BigInt;
use proptest::prelude::*;

/// Large enough that the container cap never binds on the generated clusters.
const UNBOUNDED: u32 = 1_000_000;

#[derive(Debug, Clone)]
struct Case {
    caps: Vec<Vec<u64>>,
    apps: Vec<(Vec<u64>, u32, u32)>,
}

impl Case {
    fn cluster(&self) -> ClusterSpec {
        cluster(&self.caps)
    }

    fn apps(&self) -> Vec<ApplicationSpec> {
        self.apps
            .iter()
            .enumerate()
            .map(|(i, (d, w, n))| app(&format!("a{i}"), d, *w, 1, *n))
            .collect()
    }
}

fn demand() -> impl Strategy<Value = Vec<u64>> {
    (0u64..=4, 0u64..=2, 0u64..=16)
        .prop_filter("some resource is demanded", |(c, g, r)| c + g + r > 0)
        .prop_map(|(c, g, r)| vec![c, g, r])
}

fn case(n_max: impl Strategy<Value = u32> + Clone) -> impl Strategy<Value = Case> {
    let slave = (1u64..=16, 1u64..=4, 8u64..=64).prop_map(|(c, g, r)| vec![c, g, r]);
    let application = (demand(), 1u32..=4, n_max);
    (
        prop::collection::vec(slave, 1..=4),
        prop::collection::vec(application, 1..=6),
    )
        .prop_map(|(caps, apps)| Case { caps, apps })
}

fn shares(c: &Case) -> Vec<Rational> {
    let apps = c.apps();
    let hat = drf::theoretical_shares(&apps, &c.cluster(), DrfMode::Weighted);
    apps.iter().map(|a| hat[&a.id].clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scaling_capacity_keeps_dominant_resources(c in case(1u32..=8), k in 2u64..=5) {
        let mut scaled = c.clone();
        for s in &mut scaled.caps {
            s.iter_mut().for_each(|q| *q *= k);
        }
        let (a, b) = (total_capacity(&c.cluster()), total_capacity(&scaled.cluster()));
        for spec in c.apps() {
            prop_assert_eq!(
                drf::dominant_resource(&spec.demand, &a),
                drf::dominant_resource(&spec.demand, &b)
            );
        }
    }

    #[test]
    fn scaling_capacity_keeps_uncapped_shares(c in case(Just(UNBOUNDED)), k in 2u64..=5) {
        let mut scaled = c.clone();
        for s in &mut scaled.caps {
            s.iter_mut().for_each(|q| *q *= k);
        }
        prop_assert_eq!(shares(&c), shares(&scaled));
    }

    #[test]
    fn raising_a_weight_never_lowers_that_share(c in case(1u32..=8), pick in any::<prop::sample::Index>(), extra in 1u32..=4) {
        let i = pick.index(c.apps.len());
        let mut heavier = c.clone();
        heavier.apps[i].1 += extra;
        prop_assert!(shares(&heavier)[i] >= shares(&c)[i]);
    }

    #[test]
    fn water_fill_never_exceeds_aggregate_capacity(c in case(1u32..=8)) {
        let cl = c.cluster();
        let totals = total_capacity(&cl);
        let apps = c.apps();
        let hat = drf::theoretical_shares(&apps, &cl, DrfMode::Weighted);
        for k in 0..cl.num_resources() {
            let mut used = Rational::from_integer(0.into());
            for a in &apps {
                let per = drf::container_share(&a.demand, &totals).unwrap();
                let n = &hat[&a.id] / per;
                used += n * BigInt::from(a.demand.get(k));
            }
            prop_assert!(used <= int(totals.get(k) as i64));
        }
    }

    #[test]
    fn shares_respect_container_caps(c in case(1u32..=8)) {
        let cl = c.cluster();
        let totals = total_capacity(&cl);
        let apps = c.apps();
        let hat = drf::theoretical_shares(&apps, &cl, DrfMode::Weighted);
        for a in &apps {
            let cap = drf::container_share(&a.demand, &totals).unwrap() * BigInt::from(a.n_max);
            prop_assert!(hat[&a.id] <= cap);
        }
    }

    #[test]
    fn every_app_is_capped_or_blocked(c in case(1u32..=8)) {
        let cl = c.cluster();
        let totals = total_capacity(&cl);
        let apps = c.apps();
        let hat = drf::theoretical_shares(&apps, &cl, DrfMode::Weighted);
        let mut used = vec![Rational::from_integer(0.into()); cl.num_resources()];
        for a in &apps {
            let n = &hat[&a.id] / drf::container_share(&a.demand, &totals).unwrap();
            for (k, u) in used.iter_mut().enumerate() {
                *u += &n * BigInt::from(a.demand.get(k));
            }
        }
        for a in &apps {
            let per = drf::container_share(&a.demand, &totals).unwrap();
            let capped = hat[&a.id] == per * BigInt::from(a.n_max);
            let blocked = (0..cl.num_resources())
                .any(|k| a.demand.get(k) > 0 && used[k] == int(totals.get(k) as i64));
            prop_assert!(capped || blocked, "{} can still grow", a.id);
        }
    }

    #[test]
    fn application_order_does_not_matter(c in case(1u32..=8)) {
        let mut reversed = c.clone();
        reversed.apps.reverse();
        let forward = shares(&c);
        let mut backward = shares(&reversed);
        backward.reverse();
        prop_assert_eq!(forward, backward);
    }
}
