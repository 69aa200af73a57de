//! Discrete-event replay of a workload against an allocation policy.
//!
//! Time, work and progress are exact rationals. Between events every
//! application progresses linearly at `per_container_rate * containers`
//! unless it is inside a downtime window, so completions are computed in
//! closed form and rescheduled whenever an application's state changes.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use num_bigint::BigInt;
use num_traits::Zero;
use thiserror::Error;

use crate::adjustment::{plan_adjustment, restart_downtime, AdjustmentCosts};
use crate::drf;
use crate::metrics::{self, MetricsSample};
use crate::model::{
    containers_of, validate_apps, AllocationMatrix, AppId, ApplicationSpec, ClusterSpec,
    ModelError, Rational,
};
use crate::optimizer::{self, AllocatorConfig, SolveStatus};
use crate::workload::Submission;

#[derive(Debug, Clone, PartialEq)]
pub struct StaticPolicy {
    /// Fixed container count per application type.
    pub counts: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Dorm(AllocatorConfig),
    Static(StaticPolicy),
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Dorm(_) => "dorm",
            Self::Static(_) => "static",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Simulated seconds; events after it are not processed.
    pub horizon: Rational,
    /// Seconds between periodic metric samples.
    pub cadence: Rational,
    pub costs: AdjustmentCosts,
    /// Checkpoint-and-restart injections that keep the placement.
    pub forced_restarts: Vec<(Rational, AppId)>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: Rational::from_integer(BigInt::from(24 * 3600)),
            cadence: Rational::from_integer(BigInt::from(60)),
            costs: AdjustmentCosts::default(),
            forced_restarts: Vec::new(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("workload is not sorted by submission time at `{0}`")]
    Unsorted(AppId),
    #[error("no static container count for application type `{0}`")]
    MissingStaticCount(String),
    #[error("metrics cadence must be positive")]
    BadCadence,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Processing order for events at the same instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Complete,
    AdjustmentDone,
    ForcedRestart,
    Submit,
    Reallocate,
    SampleMetrics,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct QueuedEvent {
    time: Rational,
    kind: EventKind,
    app: Option<usize>,
    token: u64,
}

/// A logged state change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: Rational,
    pub kind: &'static str,
    pub app: Option<AppId>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppRecord {
    pub app_id: AppId,
    pub app_type: String,
    pub submit: Rational,
    /// First time the application held containers.
    pub start: Option<Rational>,
    pub complete: Option<Rational>,
    /// Total seconds spent checkpointing, reshaping and resuming.
    pub downtime: Rational,
    /// Integral of held containers over time.
    pub containers_time_integral: Rational,
    /// Work progressed so far; equals `total_work` once complete.
    pub work_done: Rational,
    pub adjustments: u32,
    /// Never admitted because its minimum does not fit the empty cluster.
    pub skipped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Solved(SolveStatus),
    Fallback,
}

/// Bookkeeping of one optimizer-driven reallocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReallocationStep {
    pub time: Rational,
    pub outcome: StepOutcome,
    pub running: usize,
    pub carryover: usize,
    pub affected: u64,
    pub adjustment_budget: u64,
    pub fairness_loss: Rational,
    pub fairness_budget: Rational,
    pub utilization: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTrace {
    pub policy: &'static str,
    pub resource_names: Vec<String>,
    pub samples: Vec<MetricsSample>,
    /// In submission order.
    pub apps: Vec<AppRecord>,
    pub events: Vec<TraceEvent>,
    pub steps: Vec<ReallocationStep>,
    pub end_time: Rational,
}

/// Work units per second: zero while pending or inside a downtime window.
pub fn progress_rate(app: &ApplicationSpec, containers: u64, in_downtime: bool) -> Rational {
    if in_downtime || containers == 0 {
        Rational::zero()
    } else {
        &app.profile.per_container_rate * BigInt::from(containers)
    }
}

struct Live {
    remaining: Rational,
    containers: u64,
    /// No progress before this instant.
    blocked_until: Rational,
    last: Rational,
    token: u64,
    done: bool,
    submitted: bool,
}

struct Sim<'a> {
    subs: &'a [Submission],
    cluster: &'a ClusterSpec,
    policy: &'a Policy,
    config: &'a SimConfig,
    now: Rational,
    queue: BinaryHeap<Reverse<QueuedEvent>>,
    live: Vec<Live>,
    records: Vec<AppRecord>,
    alloc: AllocationMatrix,
    waiting: VecDeque<usize>,
    realloc_pending: bool,
    events: Vec<TraceEvent>,
    samples: Vec<MetricsSample>,
    steps: Vec<ReallocationStep>,
    current: (Rational, Rational, Vec<Rational>),
    last_affected: u64,
}

fn placement_text(items: &[(crate::model::SlaveId, u64)]) -> String {
    items
        .iter()
        .map(|(s, n)| format!("{s}:{n}"))
        .collect::<Vec<_>>()
        .join(";")
}

impl Sim<'_> {
    fn push(&mut self, time: Rational, kind: EventKind, app: Option<usize>, token: u64) {
        self.queue.push(Reverse(QueuedEvent {
            time,
            kind,
            app,
            token,
        }));
    }

    fn log(&mut self, kind: &'static str, app: Option<usize>, detail: String) {
        self.events.push(TraceEvent {
            time: self.now.clone(),
            kind,
            app: app.map(|i| self.subs[i].spec.id.clone()),
            detail,
        });
    }

    fn spec(&self, i: usize) -> &ApplicationSpec {
        &self.subs[i].spec
    }

    fn active(&self) -> Vec<usize> {
        (0..self.subs.len())
            .filter(|&i| self.live[i].submitted && !self.live[i].done && !self.records[i].skipped)
            .collect()
    }

    fn advance(&mut self, i: usize) {
        let now = self.now.clone();
        let spec = &self.subs[i].spec;
        let l = &mut self.live[i];
        if now <= l.last {
            return;
        }
        if l.containers > 0 {
            let held = BigInt::from(l.containers);
            self.records[i].containers_time_integral += (&now - &l.last) * &held;
            let from = if l.blocked_until > l.last {
                l.blocked_until.clone()
            } else {
                l.last.clone()
            };
            if now > from {
                let work = progress_rate(spec, l.containers, false) * (&now - &from);
                l.remaining -= &work;
                self.records[i].work_done += work;
            }
        }
        l.last = now;
    }

    fn advance_all(&mut self) {
        for i in self.active() {
            self.advance(i);
        }
    }

    fn schedule_completion(&mut self, i: usize) {
        let now = self.now.clone();
        let rate = progress_rate(self.spec(i), self.live[i].containers, false);
        let l = &mut self.live[i];
        l.token += 1;
        if rate.is_zero() {
            return;
        }
        let begin = if l.blocked_until > now {
            l.blocked_until.clone()
        } else {
            now
        };
        let at = begin + &l.remaining / rate;
        let token = l.token;
        self.push(at, EventKind::Complete, Some(i), token);
    }

    fn request_reallocation(&mut self) {
        if !self.realloc_pending {
            self.realloc_pending = true;
            self.push(self.now.clone(), EventKind::Reallocate, None, 0);
        }
    }

    fn block(&mut self, i: usize, seconds: &Rational) {
        let l = &mut self.live[i];
        let base = if l.blocked_until > self.now {
            l.blocked_until.clone()
        } else {
            self.now.clone()
        };
        l.blocked_until = base + seconds;
    }

    fn on_submit(&mut self, i: usize) -> Result<(), SimError> {
        self.live[i].submitted = true;
        self.live[i].last = self.now.clone();
        let spec = self.spec(i).clone();
        let needed = match self.policy {
            Policy::Dorm(_) => u64::from(spec.n_min),
            Policy::Static(s) => u64::from(
                *s.counts
                    .get(&spec.app_type)
                    .ok_or_else(|| SimError::MissingStaticCount(spec.app_type.clone()))?,
            ),
        };
        let room: u64 = self
            .cluster
            .slaves()
            .iter()
            .map(|s| {
                (0..self.cluster.num_resources())
                    .filter(|&k| spec.demand.get(k) > 0)
                    .map(|k| s.capacity.get(k) / spec.demand.get(k))
                    .min()
                    .unwrap_or(u64::MAX)
            })
            .fold(0u64, |a, b| a.saturating_add(b));
        if room < needed {
            log::warn!("{}: {needed} containers never fit the cluster, skipping", spec.id);
            self.records[i].skipped = true;
            self.log("skip", Some(i), format!("needs {needed} containers"));
            return Ok(());
        }
        self.log("submit", Some(i), String::new());
        if let Policy::Static(_) = self.policy {
            self.waiting.push_back(i);
        }
        self.request_reallocation();
        Ok(())
    }

    fn on_complete(&mut self, i: usize, token: u64) {
        if self.live[i].done || self.live[i].token != token {
            return;
        }
        self.advance(i);
        debug_assert!(self.live[i].remaining.is_zero());
        self.live[i].remaining = Rational::zero();
        self.live[i].done = true;
        self.live[i].containers = 0;
        self.records[i].complete = Some(self.now.clone());
        let id = self.spec(i).id.clone();
        self.alloc.remove_app(&id);
        self.log("complete", Some(i), String::new());
        self.request_reallocation();
    }

    fn on_forced_restart(&mut self, i: usize) {
        if !self.live[i].submitted || self.live[i].done || self.live[i].containers == 0 {
            return;
        }
        self.advance(i);
        let downtime = restart_downtime(self.spec(i), self.live[i].containers, &self.config.costs);
        self.block(i, &downtime);
        self.records[i].downtime += &downtime;
        self.records[i].adjustments += 1;
        let until = self.live[i].blocked_until.clone();
        self.push(until, EventKind::AdjustmentDone, Some(i), 0);
        self.log("restart", Some(i), format!("downtime={downtime}"));
        self.schedule_completion(i);
    }

    fn launch(&mut self, i: usize, latency: &Rational) {
        if self.records[i].start.is_none() {
            self.records[i].start = Some(self.now.clone());
        }
        self.block(i, latency);
    }

    fn reallocate_dorm(&mut self, config: &AllocatorConfig) -> Result<(), SimError> {
        let active = self.active();
        let specs: Vec<ApplicationSpec> = active.iter().map(|&i| self.spec(i).clone()).collect();
        let prev = self.alloc.clone();
        let outcome = optimizer::allocate_detailed(&specs, self.cluster, &prev, config);
        let next = outcome.allocation;
        next.check_capacity(self.cluster, &specs)?;
        let plan = plan_adjustment(&prev, &next, &specs, &self.config.costs, &self.now);
        self.alloc = next.clone();
        for &i in &active {
            self.live[i].containers = containers_of(&next, &self.spec(i).id);
        }
        let index: BTreeMap<AppId, usize> = active
            .iter()
            .map(|&i| (self.spec(i).id.clone(), i))
            .collect();
        let mut touched = BTreeSet::new();
        for adj in &plan.adjustments {
            let i = index[&adj.app_id];
            self.block(i, &adj.downtime);
            self.records[i].downtime += &adj.downtime;
            self.records[i].adjustments += 1;
            let until = self.live[i].blocked_until.clone();
            self.push(until, EventKind::AdjustmentDone, Some(i), 0);
            self.log(
                "adjust",
                Some(i),
                format!(
                    "destroyed={} created={} downtime={}",
                    placement_text(&adj.containers_destroyed),
                    placement_text(&adj.containers_created),
                    adj.downtime
                ),
            );
            touched.insert(i);
        }
        for l in &plan.launches {
            let i = index[&l.app_id];
            self.launch(i, &l.start_latency);
            self.log(
                "start",
                Some(i),
                format!("created={}", placement_text(&l.containers_created)),
            );
            touched.insert(i);
        }
        for i in touched {
            self.schedule_completion(i);
        }

        let carry = metrics::carryover_apps(&prev, specs.iter().map(|a| &a.id));
        let (fairness_budget, adjustment_budget) = optimizer::budgets(
            &config.theta1,
            &config.theta2,
            self.cluster.num_resources(),
            carry.len(),
            config.fairness_mode,
        );
        let loss = metrics::fairness_loss_with(&next, &specs, self.cluster, &outcome.theoretical)
            .expect("validated demands");
        let (util, per) = metrics::utilization(&next, &specs, self.cluster)?;
        self.current = (util.clone(), loss.clone(), per);
        self.last_affected = plan.adjustments.len() as u64;
        if specs.is_empty() {
            return Ok(());
        }
        let step_outcome = match (&outcome.solution, outcome.fell_back) {
            (Some(s), false) => StepOutcome::Solved(s.status),
            _ => StepOutcome::Fallback,
        };
        if step_outcome == StepOutcome::Fallback {
            let status = outcome
                .solution
                .as_ref()
                .map_or_else(|| "unbuilt".to_string(), |s| s.status.to_string());
            self.log("fallback", None, format!("running={} status={status}", specs.len()));
        }
        self.steps.push(ReallocationStep {
            time: self.now.clone(),
            outcome: step_outcome,
            running: specs.len(),
            carryover: carry.len(),
            affected: plan.adjustments.len() as u64,
            adjustment_budget,
            fairness_loss: loss.clone(),
            fairness_budget,
            utilization: util,
        });
        Ok(())
    }

    fn reallocate_static(&mut self, policy: &StaticPolicy) -> Result<(), SimError> {
        let m = self.cluster.num_resources();
        let active = self.active();
        let specs: Vec<ApplicationSpec> = active.iter().map(|&i| self.spec(i).clone()).collect();
        let used = self.alloc.usage(self.cluster, &specs)?;
        let mut free: Vec<Vec<u64>> = self
            .cluster
            .slaves()
            .iter()
            .zip(&used)
            .map(|(s, u)| (0..m).map(|k| s.capacity.get(k) - u.get(k)).collect())
            .collect();
        while let Some(&i) = self.waiting.front() {
            let spec = self.spec(i).clone();
            let count = policy.counts[&spec.app_type];
            let mut trial = free.clone();
            let mut placed: BTreeMap<usize, u64> = BTreeMap::new();
            let mut ok = true;
            for _ in 0..count {
                let slot = (0..trial.len())
                    .find(|&j| (0..m).all(|k| trial[j][k] >= spec.demand.get(k)));
                match slot {
                    Some(j) => {
                        for k in 0..m {
                            trial[j][k] -= spec.demand.get(k);
                        }
                        *placed.entry(j).or_default() += 1;
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                break;
            }
            self.waiting.pop_front();
            free = trial;
            let slaves = self.cluster.slaves();
            let created: Vec<_> = placed
                .iter()
                .map(|(&j, &n)| (slaves[j].id.clone(), n))
                .collect();
            for (s, n) in &created {
                self.alloc.set(spec.id.clone(), s.clone(), *n);
            }
            self.live[i].containers = u64::from(count);
            let latency = &self.config.costs.churn_per_container * BigInt::from(count);
            self.launch(i, &latency);
            self.log("start", Some(i), format!("created={}", placement_text(&created)));
            self.schedule_completion(i);
        }
        self.alloc.check_capacity(self.cluster, &specs)?;
        let hat = drf::theoretical_shares(&specs, self.cluster, drf::DrfMode::Weighted);
        let loss = metrics::fairness_loss_with(&self.alloc, &specs, self.cluster, &hat)
            .expect("validated demands");
        let (util, per) = metrics::utilization(&self.alloc, &specs, self.cluster)?;
        self.current = (util, loss, per);
        self.last_affected = 0;
        Ok(())
    }

    fn sample(&mut self, adjustment_overhead: u64) {
        self.samples.push(MetricsSample {
            time: self.now.clone(),
            utilization: self.current.0.clone(),
            fairness_loss: self.current.1.clone(),
            adjustment_overhead,
            per_resource_util: self.current.2.clone(),
        });
    }
}

/// Replays `workload` on `cluster` under `policy` until `config.horizon`.
pub fn run(
    workload: &[Submission],
    cluster: &ClusterSpec,
    policy: &Policy,
    config: &SimConfig,
) -> Result<SimTrace, SimError> {
    if config.cadence <= Rational::zero() {
        return Err(SimError::BadCadence);
    }
    for w in workload.windows(2) {
        if w[1].time < w[0].time {
            return Err(SimError::Unsorted(w[1].spec.id.clone()));
        }
    }
    let specs: Vec<ApplicationSpec> = workload.iter().map(|s| s.spec.clone()).collect();
    validate_apps(&specs, cluster.num_resources())?;

    let m = cluster.num_resources();
    let mut sim = Sim {
        subs: workload,
        cluster,
        policy,
        config,
        now: Rational::zero(),
        queue: BinaryHeap::new(),
        live: workload
            .iter()
            .map(|s| Live {
                remaining: s.spec.profile.total_work.clone(),
                containers: 0,
                blocked_until: Rational::zero(),
                last: s.time.clone(),
                token: 0,
                done: false,
                submitted: false,
            })
            .collect(),
        records: workload
            .iter()
            .map(|s| AppRecord {
                app_id: s.spec.id.clone(),
                app_type: s.spec.app_type.clone(),
                submit: s.time.clone(),
                start: None,
                complete: None,
                downtime: Rational::zero(),
                containers_time_integral: Rational::zero(),
                work_done: Rational::zero(),
                adjustments: 0,
                skipped: false,
            })
            .collect(),
        alloc: AllocationMatrix::new(),
        waiting: VecDeque::new(),
        realloc_pending: false,
        events: Vec::new(),
        samples: Vec::new(),
        steps: Vec::new(),
        current: (Rational::zero(), Rational::zero(), vec![Rational::zero(); m]),
        last_affected: 0,
    };
    for (i, s) in workload.iter().enumerate() {
        sim.push(s.time.clone(), EventKind::Submit, Some(i), 0);
    }
    for (t, id) in &config.forced_restarts {
        if let Some(i) = workload.iter().position(|s| &s.spec.id == id) {
            sim.push(t.clone(), EventKind::ForcedRestart, Some(i), 0);
        }
    }
    sim.push(Rational::zero(), EventKind::SampleMetrics, None, 0);

    while let Some(Reverse(ev)) = sim.queue.pop() {
        if ev.time > config.horizon {
            break;
        }
        sim.now = ev.time.clone();
        match ev.kind {
            EventKind::Submit => sim.on_submit(ev.app.expect("submit has app"))?,
            EventKind::Complete => sim.on_complete(ev.app.expect("complete has app"), ev.token),
            EventKind::ForcedRestart => sim.on_forced_restart(ev.app.expect("restart has app")),
            EventKind::AdjustmentDone => {
                let i = ev.app.expect("resume has app");
                if !sim.live[i].done && sim.live[i].blocked_until == sim.now {
                    sim.log("resume", Some(i), String::new());
                }
            }
            EventKind::Reallocate => {
                sim.realloc_pending = false;
                sim.advance_all();
                match policy {
                    Policy::Dorm(c) => sim.reallocate_dorm(c)?,
                    Policy::Static(s) => sim.reallocate_static(s)?,
                }
                let affected = sim.last_affected;
                sim.sample(affected);
            }
            EventKind::SampleMetrics => {
                sim.sample(0);
                let next = &sim.now + &config.cadence;
                if next <= config.horizon {
                    sim.push(next, EventKind::SampleMetrics, None, 0);
                }
            }
        }
    }
    sim.now = config.horizon.clone();
    sim.advance_all();

    Ok(SimTrace {
        policy: policy.name(),
        resource_names: cluster.resource_names().to_vec(),
        samples: sim.samples,
        apps: sim.records,
        events: sim.events,
        steps: sim.steps,
        end_time: config.horizon.clone(),
    })
}

/// Time-weighted mean over `[from, to]` of a step function given as
/// `(time, value)` points sorted by time; each value holds until the next point.
pub fn time_weighted_mean(points: &[(Rational, Rational)], from: &Rational, to: &Rational) -> Rational {
    if to <= from {
        return Rational::zero();
    }
    let mut acc = Rational::zero();
    for (k, (t, v)) in points.iter().enumerate() {
        let start = if t > from { t } else { from };
        let end = points
            .get(k + 1)
            .map_or(to, |(next, _)| if next < to { next } else { to });
        if end > start {
            acc += v * (end - start);
        }
    }
    acc / (to - from)
}

impl SimTrace {
    /// Time-weighted mean of `value` over `[from, to]`, treating samples as
    /// piecewise constant until the next sample.
    pub fn time_mean(
        &self,
        from: &Rational,
        to: &Rational,
        value: impl Fn(&MetricsSample) -> Rational,
    ) -> Rational {
        let points: Vec<(Rational, Rational)> = self
            .samples
            .iter()
            .map(|s| (s.time.clone(), value(s)))
            .collect();
        time_weighted_mean(&points, from, to)
    }

    pub fn mean_utilization(&self, from: &Rational, to: &Rational) -> Rational {
        self.time_mean(from, to, |s| s.utilization.clone())
    }

    pub fn mean_fairness_loss(&self, from: &Rational, to: &Rational) -> Rational {
        self.time_mean(from, to, |s| s.fairness_loss.clone())
    }

    pub fn max_fairness_loss(&self) -> Rational {
        self.samples
            .iter()
            .map(|s| s.fairness_loss.clone())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    /// Sum over reallocations of affected carryover applications.
    pub fn total_affected(&self) -> u64 {
        self.steps.iter().map(|s| s.affected).sum()
    }

    /// Completion time minus submission, for completed applications.
    pub fn turnaround(&self) -> BTreeMap<AppId, Rational> {
        self.apps
            .iter()
            .filter_map(|a| a.complete.as_ref().map(|c| (a.app_id.clone(), c - &a.submit)))
            .collect()
    }
}

/// Mean of `baseline / candidate` turnaround over applications present in
/// both maps, or `None` if there are none.
pub fn mean_speedup(
    baseline: &BTreeMap<AppId, Rational>,
    candidate: &BTreeMap<AppId, Rational>,
) -> Option<Rational> {
    let ratios: Vec<Rational> = baseline
        .iter()
        .filter_map(|(id, b)| candidate.get(id).filter(|c| !c.is_zero()).map(|c| b / c))
        .collect();
    if ratios.is_empty() {
        return None;
    }
    let n = BigInt::from(ratios.len());
    Some(ratios.into_iter().fold(Rational::zero(), |a, b| a + b) / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{app, cluster};
    use crate::optimizer::{SolveBudget, Theta};

    fn secs(n: i64) -> Rational {
        Rational::from_integer(n.into())
    }

    fn sub(t: i64, mut spec: ApplicationSpec, work: i64) -> Submission {
        spec.profile.total_work = secs(work);
        Submission { time: secs(t), spec }
    }

    fn dorm(t1: &str, t2: &str) -> Policy {
        Policy::Dorm(AllocatorConfig {
            budget: SolveBudget::nodes(500),
            ..AllocatorConfig::new(Theta::parse(t1).unwrap(), Theta::parse(t2).unwrap())
        })
    }

    fn quiet() -> SimConfig {
        SimConfig {
            horizon: secs(100_000),
            costs: AdjustmentCosts {
                churn_per_container: Rational::zero(),
            },
            ..SimConfig::default()
        }
    }

    #[test]
    fn rate_is_linear_in_containers() {
        let a = app("A", &[1, 4], 1, 1, 8);
        assert!(progress_rate(&a, 0, false).is_zero());
        assert_eq!(progress_rate(&a, 8, false), secs(8));
        assert!(progress_rate(&a, 8, true).is_zero());
    }

    #[test]
    fn single_app_completes_in_closed_form() {
        let c = cluster(&[&[4, 16]]);
        let w = [sub(10, app("A", &[1, 4], 1, 1, 8), 3600)];
        let trace = run(&w, &c, &dorm("0.1", "0.1"), &quiet()).unwrap();
        let rec = &trace.apps[0];
        assert_eq!(rec.start, Some(secs(10)));
        // capacity allows 4 containers: 3600 / 4 = 900 s
        assert_eq!(rec.complete, Some(secs(910)));
        assert_eq!(rec.containers_time_integral, secs(3600));
        assert_eq!(rec.work_done, secs(3600));
    }

    #[test]
    fn doubling_containers_halves_runtime() {
        let small = cluster(&[&[2, 8]]);
        let large = cluster(&[&[4, 16]]);
        let w = [sub(0, app("A", &[1, 4], 1, 1, 8), 1200)];
        let a = run(&w, &small, &dorm("0.1", "0.1"), &quiet()).unwrap();
        let b = run(&w, &large, &dorm("0.1", "0.1"), &quiet()).unwrap();
        assert_eq!(a.apps[0].complete, Some(secs(600)));
        assert_eq!(b.apps[0].complete, Some(secs(300)));
    }

    #[test]
    fn symmetric_apps_finish_together() {
        let c = cluster(&[&[4, 16], &[4, 16]]);
        let w = [
            sub(0, app("A", &[1, 4], 1, 1, 8), 1000),
            sub(0, app("B", &[1, 4], 1, 1, 8), 1000),
        ];
        // Any positive θ1 rounds up to a budget that admits uneven splits.
        let trace = run(&w, &c, &dorm("0", "0.1"), &quiet()).unwrap();
        assert_eq!(trace.apps[0].complete, trace.apps[1].complete);
        assert!(trace.apps[0].complete.is_some());
    }

    #[test]
    fn work_is_conserved_through_adjustments() {
        let c = cluster(&[&[4, 16], &[4, 16]]);
        let w = [
            sub(0, app("A", &[1, 4], 1, 1, 8), 4000),
            sub(100, app("B", &[1, 4], 1, 1, 8), 2000),
        ];
        let config = SimConfig {
            horizon: secs(100_000),
            ..SimConfig::default()
        };
        let trace = run(&w, &c, &dorm("0.2", "1"), &config).unwrap();
        let a = &trace.apps[0];
        assert!(a.adjustments >= 1, "{:?}", trace.events);
        assert!(a.downtime > Rational::zero());
        // Progress only outside downtime: held integral exceeds the work.
        assert!(a.containers_time_integral > secs(4000));
        assert!(trace.apps.iter().all(|r| r.complete.is_some()));
    }

    #[test]
    fn zero_adjustment_budget_freezes_running_apps() {
        let c = cluster(&[&[4, 16], &[4, 16]]);
        let w = [
            sub(0, app("A", &[1, 4], 1, 1, 8), 4000),
            sub(100, app("B", &[1, 4], 1, 1, 8), 2000),
        ];
        let trace = run(&w, &c, &dorm("0.2", "0"), &quiet()).unwrap();
        assert_eq!(trace.total_affected(), 0);
        assert!(trace.apps.iter().all(|r| r.adjustments == 0));
        // B waits for A to finish at 500 s.
        assert_eq!(trace.apps[1].start, Some(secs(500)));
    }

    #[test]
    fn static_policy_queues_fifo() {
        let c = cluster(&[&[4, 16]]);
        let mut a = app("A", &[1, 4], 1, 1, 8);
        a.app_type = "small".into();
        let mut b = a.clone();
        b.id = "B".into();
        let policy = Policy::Static(StaticPolicy {
            counts: [("small".to_string(), 3)].into(),
        });
        let w = [sub(0, a, 300), sub(0, b, 300)];
        let trace = run(&w, &c, &policy, &quiet()).unwrap();
        assert_eq!(trace.apps[0].complete, Some(secs(100)));
        assert_eq!(trace.apps[1].start, Some(secs(100)));
        assert_eq!(trace.apps[1].complete, Some(secs(200)));
        assert!(trace.samples.iter().all(|s| s.adjustment_overhead == 0));
    }

    #[test]
    fn oversized_apps_are_skipped() {
        let c = cluster(&[&[4, 16]]);
        let w = [sub(0, app("A", &[1, 4], 1, 5, 8), 100)];
        let trace = run(&w, &c, &dorm("0.1", "0.1"), &quiet()).unwrap();
        assert!(trace.apps[0].skipped);
        assert!(trace.apps[0].start.is_none());
    }

    #[test]
    fn rejects_unsorted_workload() {
        let c = cluster(&[&[4, 16]]);
        let w = [
            sub(10, app("A", &[1, 4], 1, 1, 8), 100),
            sub(5, app("B", &[1, 4], 1, 1, 8), 100),
        ];
        assert_eq!(
            run(&w, &c, &dorm("0.1", "0.1"), &quiet()),
            Err(SimError::Unsorted("B".into()))
        );
    }

    #[test]
    fn forced_restart_pauses_progress() {
        let c = cluster(&[&[4, 16]]);
        let mut a = app("A", &[1, 4], 1, 1, 4);
        a.profile.checkpoint_save_cost = secs(10);
        a.profile.resume_cost = secs(10);
        let w = [sub(0, a, 4000)];
        let config = SimConfig {
            forced_restarts: vec![(secs(100), "A".into())],
            ..quiet()
        };
        let trace = run(&w, &c, &dorm("0.1", "0.1"), &config).unwrap();
        assert_eq!(trace.apps[0].complete, Some(secs(1020)));
        assert_eq!(trace.apps[0].downtime, secs(20));
    }

    #[test]
    fn time_mean_is_piecewise_constant() {
        let c = cluster(&[&[4, 16]]);
        let w = [sub(0, app("A", &[1, 4], 1, 1, 4), 400)];
        let trace = run(
            &w,
            &c,
            &dorm("0.1", "0.1"),
            &SimConfig {
                horizon: secs(200),
                ..quiet()
            },
        )
        .unwrap();
        // full (2.0) for 100 s, then empty
        assert_eq!(trace.mean_utilization(&secs(0), &secs(200)), secs(1));
    }
}
