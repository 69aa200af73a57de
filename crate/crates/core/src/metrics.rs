//! Cluster-level objectives: resource utilization, fairness loss and
//! adjustment overhead.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use crate::drf::{self, DrfError, DrfMode};
use crate::model::{
    total_capacity, AllocationMatrix, AppId, ApplicationSpec, ClusterSpec, ModelError, Rational,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsSample {
    /// Simulated seconds.
    pub time: Rational,
    /// Sum of `per_resource_util`, in `[0, m]`.
    pub utilization: Rational,
    pub fairness_loss: Rational,
    /// Affected carryover applications at this instant (zero for cadence samples).
    pub adjustment_overhead: u64,
    pub per_resource_util: Vec<Rational>,
}

/// Per-resource utilization `u_k = sum_i sum_j x_ij d_ik / sum_h c_hk` and its total.
pub fn utilization(
    alloc: &AllocationMatrix,
    apps: &[ApplicationSpec],
    cluster: &ClusterSpec,
) -> Result<(Rational, Vec<Rational>), ModelError> {
    let totals = total_capacity(cluster);
    let used = alloc.usage(cluster, apps)?;
    let per: Vec<Rational> = (0..cluster.num_resources())
        .map(|k| {
            let sum: u64 = used.iter().map(|u| u.get(k)).sum();
            Rational::new(BigInt::from(sum), BigInt::from(totals.get(k)))
        })
        .collect();
    let total = per.iter().fold(Rational::zero(), |acc, u| acc + u);
    Ok((total, per))
}

/// `sum_i |s_i - hat s_i|` with precomputed theoretical shares.
pub fn fairness_loss_with(
    alloc: &AllocationMatrix,
    apps: &[ApplicationSpec],
    cluster: &ClusterSpec,
    theoretical: &BTreeMap<AppId, Rational>,
) -> Result<Rational, DrfError> {
    let mut loss = Rational::zero();
    for a in apps {
        let s = drf::actual_dominant_share(a, alloc, cluster)?;
        let hat = theoretical.get(&a.id).cloned().unwrap_or_else(Rational::zero);
        loss += (s - hat).abs();
    }
    Ok(loss)
}

/// Fairness loss of `alloc` against the DRF shares of the application set.
pub fn fairness_loss(
    alloc: &AllocationMatrix,
    apps: &[ApplicationSpec],
    cluster: &ClusterSpec,
    mode: DrfMode,
) -> Result<Rational, DrfError> {
    let hat = drf::theoretical_shares(apps, cluster, mode);
    fairness_loss_with(alloc, apps, cluster, &hat)
}

/// Applications holding containers in `prev` that are still present in `current`.
///
/// Applications that were waiting with zero containers are launches, not
/// adjustments, so they are not carried over.
pub fn carryover_apps<'a>(
    prev: &AllocationMatrix,
    current: impl IntoIterator<Item = &'a AppId>,
) -> BTreeSet<AppId> {
    let held = prev.apps();
    current
        .into_iter()
        .filter(|a| held.contains(*a))
        .cloned()
        .collect()
}

/// `r_i = 1` iff some slave's container count for carryover app `i` differs
/// between `prev` and `next`. Newly launched and completed applications are
/// excluded from the map.
pub fn adjustment_flags(
    prev: &AllocationMatrix,
    next: &AllocationMatrix,
    carryover: &BTreeSet<AppId>,
) -> BTreeMap<AppId, u8> {
    carryover
        .iter()
        .map(|app| {
            let before: BTreeMap<_, _> = prev.placements(app).collect();
            let after: BTreeMap<_, _> = next.placements(app).collect();
            (app.clone(), u8::from(before != after))
        })
        .collect()
}

/// Number of carryover applications whose placement changed.
pub fn adjustment_overhead(
    prev: &AllocationMatrix,
    next: &AllocationMatrix,
    carryover: &BTreeSet<AppId>,
) -> u64 {
    adjustment_flags(prev, next, carryover)
        .values()
        .map(|&r| u64::from(r))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{app, cluster};
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    #[test]
    fn empty_allocation_has_zero_utilization() {
        let c = cluster(&[&[12, 48]]);
        let apps = [app("A", &[2, 8], 1, 1, 5)];
        let (total, per) = utilization(&AllocationMatrix::new(), &apps, &c).unwrap();
        assert!(total.is_zero());
        assert!(per.iter().all(Zero::is_zero));
    }

    #[test]
    fn utilization_sums_resources() {
        let c = cluster(&[&[12, 48]]);
        let apps = [app("A", &[2, 8], 1, 1, 5)];
        let mut x = AllocationMatrix::new();
        x.set("A".into(), "s1".into(), 3);
        let (total, per) = utilization(&x, &apps, &c).unwrap();
        assert_eq!(per, vec![r(1, 2), r(1, 2)]);
        assert_eq!(total, r(1, 1));
    }

    #[test]
    fn full_cluster_reaches_m() {
        let c = cluster(&[&[4, 16], &[4, 16]]);
        let apps = [app("A", &[2, 8], 1, 1, 5)];
        let mut x = AllocationMatrix::new();
        x.set("A".into(), "s1".into(), 2);
        x.set("A".into(), "s2".into(), 2);
        assert_eq!(utilization(&x, &apps, &c).unwrap().0, r(2, 1));
    }

    #[test]
    fn fairness_loss_cases() {
        let c = cluster(&[&[9, 18]]);
        let apps = [app("A", &[1, 4], 1, 1, 100), app("B", &[3, 1], 1, 1, 100)];
        let mut x = AllocationMatrix::new();
        x.set("A".into(), "s1".into(), 3);
        x.set("B".into(), "s1".into(), 2);
        assert!(fairness_loss(&x, &apps, &c, DrfMode::Weighted)
            .unwrap()
            .is_zero());

        let single = [app("A", &[1, 4], 1, 1, 100)];
        assert_eq!(
            fairness_loss(&AllocationMatrix::new(), &single, &c, DrfMode::Weighted).unwrap(),
            r(1, 1)
        );
    }

    #[test]
    fn migration_at_constant_total_is_flagged() {
        let mut prev = AllocationMatrix::new();
        prev.set("A".into(), "s1".into(), 2);
        prev.set("A".into(), "s2".into(), 1);
        prev.set("B".into(), "s1".into(), 1);
        let mut next = prev.clone();
        next.set("A".into(), "s1".into(), 1);
        next.set("A".into(), "s2".into(), 2);
        let carry: BTreeSet<AppId> = ["A".into(), "B".into()].into();
        let flags = adjustment_flags(&prev, &next, &carry);
        assert_eq!(flags[&AppId::from("A")], 1);
        assert_eq!(flags[&AppId::from("B")], 0);
        assert_eq!(adjustment_overhead(&prev, &next, &carry), 1);
    }

    #[test]
    fn new_apps_are_not_flagged() {
        let mut prev = AllocationMatrix::new();
        prev.set("A".into(), "s1".into(), 2);
        let mut next = prev.clone();
        next.set("N".into(), "s1".into(), 3);
        let carry = carryover_apps(&prev, [&AppId::from("A"), &AppId::from("N")]);
        assert_eq!(carry, ["A".into()].into());
        let flags = adjustment_flags(&prev, &next, &carry);
        assert!(!flags.contains_key(&AppId::from("N")));
        assert_eq!(adjustment_overhead(&prev, &next, &carry), 0);
    }

    #[test]
    fn overhead_counts_changed_apps() {
        let mut prev = AllocationMatrix::new();
        for a in ["a", "b", "c", "d", "e"] {
            prev.set(a.into(), "s1".into(), 1);
        }
        let mut next = prev.clone();
        next.set("b".into(), "s1".into(), 2);
        next.set("d".into(), "s2".into(), 1);
        let carry = prev.apps();
        assert_eq!(adjustment_overhead(&prev, &next, &carry), 2);
    }

    fn matrix(entries: &[(u8, u8, u64)]) -> AllocationMatrix {
        let mut x = AllocationMatrix::new();
        for &(a, s, n) in entries {
            x.set(AppId(format!("a{a}")), format!("s{s}").as_str().into(), n);
        }
        x
    }

    proptest! {
        #[test]
        fn flags_symmetric_and_reflexive(
            p in prop::collection::vec((0u8..4, 0u8..3, 0u64..4), 0..10),
            q in prop::collection::vec((0u8..4, 0u8..3, 0u64..4), 0..10),
        ) {
            let prev = matrix(&p);
            let next = matrix(&q);
            let carry: BTreeSet<AppId> = (0..4).map(|a| AppId(format!("a{a}"))).collect();
            prop_assert_eq!(
                adjustment_flags(&prev, &next, &carry),
                adjustment_flags(&next, &prev, &carry)
            );
            prop_assert_eq!(adjustment_overhead(&prev, &prev, &carry), 0);
        }

        #[test]
        fn utilization_bounded_by_m(
            counts in prop::collection::vec(0u64..3, 2),
        ) {
            let c = cluster(&[&[8, 2, 32], &[8, 2, 32]]);
            let apps = [app("A", &[4, 1, 16], 1, 1, 4)];
            let mut x = AllocationMatrix::new();
            x.set("A".into(), "s1".into(), counts[0]);
            x.set("A".into(), "s2".into(), counts[1]);
            let (total, per) = utilization(&x, &apps, &c).unwrap();
            prop_assert!(total >= Rational::zero() && total <= r(3, 1));
            prop_assert_eq!(per.iter().fold(Rational::zero(), |a, b| a + b), total.clone());
            let full = counts.iter().all(|&n| n == 2);
            prop_assert_eq!(total < r(3, 1), !full);
        }
    }
}
