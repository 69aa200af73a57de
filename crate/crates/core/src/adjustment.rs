//! Checkpoint-based resizing: which running applications must save, be
//! killed, have their containers reshaped and resume, and what it costs them.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::Zero;

use crate::metrics;
use crate::model::{AllocationMatrix, AppId, ApplicationSpec, Rational, SlaveId};

/// Container churn latency shared by all applications. Save and resume
/// costs come from each application's profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjustmentCosts {
    /// Seconds per container created or destroyed.
    pub churn_per_container: Rational,
}

impl Default for AdjustmentCosts {
    fn default() -> Self {
        Self {
            churn_per_container: Rational::new(3.into(), 2.into()),
        }
    }
}

/// One running application that is checkpointed and reshaped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppAdjustment {
    pub app_id: AppId,
    pub saves_at: Rational,
    /// `save + churn * changed containers + resume`.
    pub downtime: Rational,
    pub containers_destroyed: Vec<(SlaveId, u64)>,
    pub containers_created: Vec<(SlaveId, u64)>,
}

impl AppAdjustment {
    pub fn containers_changed(&self) -> u64 {
        self.containers_destroyed
            .iter()
            .chain(&self.containers_created)
            .map(|(_, n)| n)
            .sum()
    }
}

/// A waiting application receiving its first containers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Launch {
    pub app_id: AppId,
    /// `churn * containers created`.
    pub start_latency: Rational,
    pub containers_created: Vec<(SlaveId, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AdjustmentPlan {
    /// Carryover applications whose placement changed, in id order.
    pub adjustments: Vec<AppAdjustment>,
    pub launches: Vec<Launch>,
}

impl AdjustmentPlan {
    pub fn is_empty(&self) -> bool {
        self.adjustments.is_empty() && self.launches.is_empty()
    }

    pub fn adjustment(&self, app: &AppId) -> Option<&AppAdjustment> {
        self.adjustments.iter().find(|a| &a.app_id == app)
    }
}

/// Per-slave deltas `(destroyed, created)` of one application.
fn deltas(
    prev: &AllocationMatrix,
    next: &AllocationMatrix,
    app: &AppId,
) -> (Vec<(SlaveId, u64)>, Vec<(SlaveId, u64)>) {
    let before: BTreeMap<&SlaveId, u64> = prev.placements(app).collect();
    let after: BTreeMap<&SlaveId, u64> = next.placements(app).collect();
    let slaves: BTreeSet<&SlaveId> = before.keys().chain(after.keys()).copied().collect();
    let mut destroyed = Vec::new();
    let mut created = Vec::new();
    for s in slaves {
        let b = before.get(s).copied().unwrap_or(0);
        let a = after.get(s).copied().unwrap_or(0);
        if b > a {
            destroyed.push((s.clone(), b - a));
        } else if a > b {
            created.push((s.clone(), a - b));
        }
    }
    (destroyed, created)
}

/// Plans the transition from `prev` to `next` for the applications in `apps`
/// at time `now`. Applications absent from `apps` are treated as finished.
pub fn plan_adjustment(
    prev: &AllocationMatrix,
    next: &AllocationMatrix,
    apps: &[ApplicationSpec],
    costs: &AdjustmentCosts,
    now: &Rational,
) -> AdjustmentPlan {
    let carry = metrics::carryover_apps(prev, apps.iter().map(|a| &a.id));
    let flags = metrics::adjustment_flags(prev, next, &carry);
    let mut plan = AdjustmentPlan::default();
    let mut ordered: Vec<&ApplicationSpec> = apps.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    for spec in ordered {
        if flags.get(&spec.id) == Some(&1) {
            let (destroyed, created) = deltas(prev, next, &spec.id);
            let changed: u64 = destroyed.iter().chain(&created).map(|(_, n)| n).sum();
            let downtime = &spec.profile.checkpoint_save_cost
                + &costs.churn_per_container * BigInt::from(changed)
                + &spec.profile.resume_cost;
            plan.adjustments.push(AppAdjustment {
                app_id: spec.id.clone(),
                saves_at: now.clone(),
                downtime,
                containers_destroyed: destroyed,
                containers_created: created,
            });
        } else if !carry.contains(&spec.id) {
            let (_, created) = deltas(prev, next, &spec.id);
            if created.is_empty() {
                continue;
            }
            let n: u64 = created.iter().map(|(_, n)| n).sum();
            plan.launches.push(Launch {
                app_id: spec.id.clone(),
                start_latency: &costs.churn_per_container * BigInt::from(n),
                containers_created: created,
            });
        }
    }
    plan
}

/// Downtime of a restart that keeps the placement: every container is
/// destroyed and recreated.
pub fn restart_downtime(spec: &ApplicationSpec, containers: u64, costs: &AdjustmentCosts) -> Rational {
    if containers == 0 {
        return Rational::zero();
    }
    &spec.profile.checkpoint_save_cost
        + &costs.churn_per_container * BigInt::from(2 * containers)
        + &spec.profile.resume_cost
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::app;

    fn secs(n: i64) -> Rational {
        Rational::from_integer(n.into())
    }

    #[test]
    fn identical_allocations_plan_nothing() {
        let apps = [app("A", &[1, 4], 1, 1, 4)];
        let mut x = AllocationMatrix::new();
        x.set("A".into(), "s1".into(), 2);
        let plan = plan_adjustment(&x, &x, &apps, &AdjustmentCosts::default(), &secs(0));
        assert!(plan.is_empty());
    }

    #[test]
    fn downtime_is_save_churn_resume() {
        let mut a = app("A", &[1, 4], 1, 1, 8);
        a.profile.checkpoint_save_cost = secs(30);
        a.profile.resume_cost = secs(30);
        let mut prev = AllocationMatrix::new();
        prev.set("A".into(), "s1".into(), 3);
        let mut next = AllocationMatrix::new();
        next.set("A".into(), "s1".into(), 1);
        next.set("A".into(), "s2".into(), 2);
        let costs = AdjustmentCosts {
            churn_per_container: secs(1),
        };
        let plan = plan_adjustment(&prev, &next, &[a], &costs, &secs(100));
        let adj = &plan.adjustments[0];
        assert_eq!(adj.containers_changed(), 4);
        assert_eq!(adj.downtime, secs(64));
        assert_eq!(adj.saves_at, secs(100));
        assert_eq!(adj.containers_destroyed, vec![("s1".into(), 2)]);
        assert_eq!(adj.containers_created, vec![("s2".into(), 2)]);
    }

    #[test]
    fn new_apps_launch_and_finished_apps_vanish() {
        let apps = [app("A", &[1, 4], 1, 1, 4), app("N", &[1, 4], 1, 1, 4)];
        let mut prev = AllocationMatrix::new();
        prev.set("A".into(), "s1".into(), 2);
        prev.set("Done".into(), "s2".into(), 3);
        let mut next = prev.clone();
        next.set("Done".into(), "s2".into(), 0);
        next.set("N".into(), "s2".into(), 2);
        let plan = plan_adjustment(&prev, &next, &apps, &AdjustmentCosts::default(), &secs(0));
        assert!(plan.adjustments.is_empty());
        assert_eq!(plan.launches.len(), 1);
        assert_eq!(plan.launches[0].app_id, AppId::from("N"));
        assert_eq!(plan.launches[0].start_latency, secs(3));
    }

    #[test]
    fn default_restart_cost_is_calibrated() {
        let mut a = app("A", &[1, 4], 1, 1, 16);
        a.profile.checkpoint_save_cost = secs(120);
        a.profile.resume_cost = secs(120);
        assert_eq!(restart_downtime(&a, 10, &AdjustmentCosts::default()), secs(270));
        assert!(restart_downtime(&a, 0, &AdjustmentCosts::default()).is_zero());
    }
}
