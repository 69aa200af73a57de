//! Shared domain types: resource vectors, cluster topology, application
//! submissions and container allocation matrices.
//!
//! Resource amounts are fixed-point integers in thousandths of a unit
//! (milli-CPU, milli-GPU, MB-ish thousandths of a GB), so capacity checks are
//! exact integer comparisons. Shares and utilizations derived from them are
//! exact big rationals.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

/// Exact rational number used for shares, utilization, work and time.
pub type Rational = BigRational;

/// Fixed-point scale: one unit of any resource is `MILLI` raw quantities.
pub const MILLI: u64 = 1000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("cluster has no slaves")]
    NoSlaves,
    #[error("cluster has no resource types")]
    NoResources,
    #[error("duplicate slave id `{0}`")]
    DuplicateSlave(SlaveId),
    #[error("duplicate application id `{0}`")]
    DuplicateApp(AppId),
    #[error("{what} has {got} resource components, expected {expected}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("slave `{0}` has no capacity at all")]
    EmptySlave(SlaveId),
    #[error("cluster has zero aggregate capacity of resource `{0}`")]
    ZeroAggregate(String),
    #[error("application `{0}` has an all-zero demand vector")]
    ZeroDemand(AppId),
    #[error("application `{app}`: {reason}")]
    InvalidApp { app: AppId, reason: String },
    #[error("slave `{slave}` over capacity on resource {resource}")]
    OverCapacity { slave: SlaveId, resource: usize },
    #[error("allocation references unknown {kind} `{id}`")]
    UnknownId { kind: &'static str, id: String },
    #[error("invalid quantity `{0}`: {1}")]
    InvalidQuantity(String, &'static str),
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(AppId);
string_id!(SlaveId);

/// Per-resource amounts in thousandths of a unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ResourceVector(Vec<u64>);

impl ResourceVector {
    pub fn from_milli(quantities: Vec<u64>) -> Self {
        Self(quantities)
    }

    /// Whole units, e.g. `[2, 0, 8]` for 2 CPU, 0 GPU, 8 GB.
    pub fn from_units(units: &[u64]) -> Self {
        Self(units.iter().map(|u| u * MILLI).collect())
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn milli(&self) -> &[u64] {
        &self.0
    }

    pub fn get(&self, k: usize) -> u64 {
        self.0[k]
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&q| q == 0)
    }

    /// Component `k` as an exact number of whole units.
    pub fn units(&self, k: usize) -> Rational {
        Rational::new(BigInt::from(self.0[k]), BigInt::from(MILLI))
    }

    pub fn add_assign(&mut self, other: &ResourceVector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scaled(&self, n: u64) -> ResourceVector {
        Self(self.0.iter().map(|q| q * n).collect())
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<")?;
        for (k, q) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", format_milli(*q))?;
        }
        f.write_str(">")
    }
}

/// Renders a milli-quantity as the shortest exact decimal.
pub fn format_milli(q: u64) -> String {
    let whole = q / MILLI;
    let frac = q % MILLI;
    if frac == 0 {
        whole.to_string()
    } else {
        let s = format!("{whole}.{frac:03}");
        s.trim_end_matches('0').to_string()
    }
}

/// Parses a non-negative decimal with at most three fractional digits into
/// milli-units.
pub fn parse_milli(text: &str) -> Result<u64, ModelError> {
    let t = text.trim();
    let bad = |why| ModelError::InvalidQuantity(text.to_string(), why);
    if t.is_empty() {
        return Err(bad("empty"));
    }
    let (whole, frac) = match t.split_once('.') {
        Some((w, f)) => (w, f),
        None => (t, ""),
    };
    if whole.starts_with('-') {
        return Err(bad("negative"));
    }
    let whole = if whole.is_empty() { "0" } else { whole };
    let frac = frac.trim_end_matches('0');
    if frac.len() > 3 {
        return Err(bad("more than three fractional digits"));
    }
    if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad("not a decimal number"));
    }
    let w: u64 = whole.parse().map_err(|_| bad("out of range"))?;
    let f: u64 = if frac.is_empty() {
        0
    } else {
        format!("{frac:0<3}").parse().map_err(|_| bad("out of range"))?
    };
    w.checked_mul(MILLI)
        .and_then(|v| v.checked_add(f))
        .ok_or_else(|| bad("out of range"))
}

/// Parses a non-negative plain decimal (`12`, `0.25`, `.5`) exactly.
pub fn parse_decimal(text: &str) -> Option<Rational> {
    let t = text.trim();
    let (whole, frac) = t.split_once('.').unwrap_or((t, ""));
    if (whole.is_empty() && frac.is_empty())
        || !whole.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{whole}{frac}");
    let numer: BigInt = digits.parse().ok()?;
    let denom = BigInt::from(10u32).pow(frac.len() as u32);
    Some(Rational::new(numer, denom))
}

/// Renders `r` rounded half away from zero to exactly `digits` fractional
/// digits.
pub fn format_fixed(r: &Rational, digits: u32) -> String {
    let scale = BigInt::from(10u32).pow(digits);
    let negative = r < &Rational::zero();
    let mag = if negative { -r.clone() } else { r.clone() };
    let scaled = mag * &scale + Rational::new(1.into(), 2.into());
    let units = scaled.floor().to_integer();
    let whole = &units / &scale;
    let frac = &units % &scale;
    let sign = if negative && units != BigInt::zero() { "-" } else { "" };
    if digits == 0 {
        format!("{sign}{whole}")
    } else {
        format!("{sign}{whole}.{frac:0>width$}", width = digits as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slave {
    pub id: SlaveId,
    pub capacity: ResourceVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSpec {
    resource_names: Vec<String>,
    slaves: Vec<Slave>,
}

impl ClusterSpec {
    /// Validates and builds a cluster.
    ///
    /// A single slave may lack a resource type entirely (e.g. a CPU-only
    /// server), but every slave must offer something and every resource type
    /// must exist somewhere in the cluster.
    pub fn new(resource_names: Vec<String>, slaves: Vec<Slave>) -> Result<Self, ModelError> {
        let m = resource_names.len();
        if m == 0 {
            return Err(ModelError::NoResources);
        }
        if slaves.is_empty() {
            return Err(ModelError::NoSlaves);
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &slaves {
            if !seen.insert(s.id.clone()) {
                return Err(ModelError::DuplicateSlave(s.id.clone()));
            }
            if s.capacity.len() != m {
                return Err(ModelError::DimensionMismatch {
                    what: format!("slave `{}` capacity", s.id),
                    expected: m,
                    got: s.capacity.len(),
                });
            }
            if s.capacity.is_zero() {
                return Err(ModelError::EmptySlave(s.id.clone()));
            }
        }
        let spec = Self {
            resource_names,
            slaves,
        };
        let total = total_capacity(&spec);
        for (k, name) in spec.resource_names.iter().enumerate() {
            if total.get(k) == 0 {
                return Err(ModelError::ZeroAggregate(name.clone()));
            }
        }
        Ok(spec)
    }

    /// `count` identical slaves named `slave-1..=slave-count`.
    pub fn uniform(
        resource_names: Vec<String>,
        count: usize,
        capacity: ResourceVector,
    ) -> Result<Self, ModelError> {
        let slaves = (1..=count)
            .map(|i| Slave {
                id: SlaveId(format!("slave-{i}")),
                capacity: capacity.clone(),
            })
            .collect();
        Self::new(resource_names, slaves)
    }

    /// The 20-slave evaluation testbed: 240 CPU cores, 5 GPUs and 2560 GB
    /// RAM in total. Each slave has 12 cores and 128 GB; the last five
    /// slaves carry one GPU each.
    pub fn testbed() -> Self {
        let slaves = (1..=20)
            .map(|i| Slave {
                id: SlaveId(format!("slave-{i:02}")),
                capacity: ResourceVector::from_units(&[12, u64::from(i > 15), 128]),
            })
            .collect();
        Self::new(vec!["cpu".into(), "gpu".into(), "ram".into()], slaves)
            .expect("testbed is valid")
    }

    pub fn resource_names(&self) -> &[String] {
        &self.resource_names
    }

    pub fn num_resources(&self) -> usize {
        self.resource_names.len()
    }

    pub fn slaves(&self) -> &[Slave] {
        &self.slaves
    }

    pub fn slave_index(&self, id: &SlaveId) -> Option<usize> {
        self.slaves.iter().position(|s| &s.id == id)
    }
}

/// Component-wise sum of all slave capacities.
pub fn total_capacity(cluster: &ClusterSpec) -> ResourceVector {
    let mut total = ResourceVector::zeros(cluster.num_resources());
    for s in cluster.slaves() {
        total.add_assign(&s.capacity);
    }
    total
}

/// Simulation stand-in for the launch/resume command of a submission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadProfile {
    /// Abstract iteration units needed to finish.
    pub total_work: Rational,
    /// Work units per second contributed by each running container.
    pub per_container_rate: Rational,
    /// Seconds to checkpoint state before a kill.
    pub checkpoint_save_cost: Rational,
    /// Seconds to restore from a checkpoint.
    pub resume_cost: Rational,
}

impl WorkloadProfile {
    pub fn validate(&self) -> Result<(), String> {
        if self.total_work <= Rational::zero() {
            return Err("total_work must be positive".into());
        }
        if self.per_container_rate <= Rational::zero() {
            return Err("per_container_rate must be positive".into());
        }
        if self.checkpoint_save_cost < Rational::zero() || self.resume_cost < Rational::zero() {
            return Err("checkpoint costs must be non-negative".into());
        }
        Ok(())
    }
}

/// A submitted application: executor label, per-container demand, weight,
/// container bounds, and the workload profile driving the simulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApplicationSpec {
    pub id: AppId,
    /// Workload class, e.g. `LR` or `ResNet-50`.
    pub app_type: String,
    pub executor: String,
    pub demand: ResourceVector,
    pub weight: u32,
    pub n_max: u32,
    pub n_min: u32,
    pub profile: WorkloadProfile,
}

impl ApplicationSpec {
    pub fn validate(&self, m: usize) -> Result<(), ModelError> {
        let invalid = |reason: String| ModelError::InvalidApp {
            app: self.id.clone(),
            reason,
        };
        if self.demand.len() != m {
            return Err(ModelError::DimensionMismatch {
                what: format!("application `{}` demand", self.id),
                expected: m,
                got: self.demand.len(),
            });
        }
        if self.demand.is_zero() {
            return Err(ModelError::ZeroDemand(self.id.clone()));
        }
        if self.weight == 0 {
            return Err(invalid("weight must be positive".into()));
        }
        if self.n_min == 0 {
            return Err(invalid("n_min must be at least 1".into()));
        }
        if self.n_min > self.n_max {
            return Err(invalid(format!(
                "n_min {} exceeds n_max {}",
                self.n_min, self.n_max
            )));
        }
        self.profile.validate().map_err(invalid)
    }
}

/// Checks ids are unique and every spec is valid for an `m`-resource cluster.
pub fn validate_apps(apps: &[ApplicationSpec], m: usize) -> Result<(), ModelError> {
    let mut seen = std::collections::BTreeSet::new();
    for a in apps {
        if !seen.insert(&a.id) {
            return Err(ModelError::DuplicateApp(a.id.clone()));
        }
        a.validate(m)?;
    }
    Ok(())
}

/// Containers per (application, slave). Absent entries are zero; zero counts
/// are never stored, so two matrices with equal placements compare equal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct AllocationMatrix {
    entries: BTreeMap<(AppId, SlaveId), u64>,
}

impl AllocationMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, app: &AppId, slave: &SlaveId) -> u64 {
        self.entries
            .get(&(app.clone(), slave.clone()))
            .copied()
            .unwrap_or(0)
    }

    pub fn set(&mut self, app: AppId, slave: SlaveId, count: u64) {
        if count == 0 {
            self.entries.remove(&(app, slave));
        } else {
            self.entries.insert((app, slave), count);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Non-zero entries in (app, slave) order.
    pub fn iter(&self) -> impl Iterator<Item = (&AppId, &SlaveId, u64)> {
        self.entries.iter().map(|((a, s), &n)| (a, s, n))
    }

    /// Non-zero (slave, count) pairs of one application.
    pub fn placements<'a>(&'a self, app: &'a AppId) -> impl Iterator<Item = (&'a SlaveId, u64)> {
        self.entries
            .iter()
            .filter(move |((a, _), _)| a == app)
            .map(|((_, s), &n)| (s, n))
    }

    pub fn apps(&self) -> std::collections::BTreeSet<AppId> {
        self.entries.keys().map(|(a, _)| a.clone()).collect()
    }

    /// The same matrix keeping only applications accepted by `keep`.
    pub fn restricted(&self, keep: impl Fn(&AppId) -> bool) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|((a, _), _)| keep(a))
                .map(|(k, &v)| (k.clone(), v))
                .collect(),
        }
    }

    pub fn remove_app(&mut self, app: &AppId) {
        self.entries.retain(|(a, _), _| a != app);
    }

    /// Resources held on each slave, indexed like `cluster.slaves()`.
    pub fn usage(
        &self,
        cluster: &ClusterSpec,
        apps: &[ApplicationSpec],
    ) -> Result<Vec<ResourceVector>, ModelError> {
        let m = cluster.num_resources();
        let mut used = vec![ResourceVector::zeros(m); cluster.slaves().len()];
        for (app, slave, n) in self.iter() {
            let spec = apps
                .iter()
                .find(|a| &a.id == app)
                .ok_or_else(|| ModelError::UnknownId {
                    kind: "application",
                    id: app.to_string(),
                })?;
            let j = cluster
                .slave_index(slave)
                .ok_or_else(|| ModelError::UnknownId {
                    kind: "slave",
                    id: slave.to_string(),
                })?;
            used[j].add_assign(&spec.demand.scaled(n));
        }
        Ok(used)
    }

    /// Verifies every (slave, resource) pair stays within capacity.
    pub fn check_capacity(
        &self,
        cluster: &ClusterSpec,
        apps: &[ApplicationSpec],
    ) -> Result<(), ModelError> {
        let used = self.usage(cluster, apps)?;
        for (u, s) in used.iter().zip(cluster.slaves()) {
            for k in 0..cluster.num_resources() {
                if u.get(k) > s.capacity.get(k) {
                    return Err(ModelError::OverCapacity {
                        slave: s.id.clone(),
                        resource: k,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Total containers held by `app` across all slaves.
pub fn containers_of(alloc: &AllocationMatrix, app: &AppId) -> u64 {
    alloc.placements(app).map(|(_, n)| n).sum()
}
