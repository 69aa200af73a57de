//! Synthetic workload generation and workload files.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    format_milli, parse_decimal, parse_milli, AppId, ApplicationSpec, ModelError, Rational,
    ResourceVector, WorkloadProfile,
};

/// Format tag carried by every structured-text file.
pub const FORMAT_VERSION: &str = "dormalloc-v1";

const HOUR: f64 = 3600.0;

/// One application arriving at `time` seconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Submission {
    pub time: Rational,
    pub spec: ApplicationSpec,
}

/// How long an application runs at its reference container count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DurationModel {
    /// `ln D ~ N(ln median, sigma^2)`, in seconds.
    LogNormal { median: f64, sigma: f64 },
    Constant { seconds: f64 },
}

impl DurationModel {
    /// Log-normal with a 12 h median whose 10% quantile sits at 6 h, so
    /// 90% of applications run longer than six hours.
    pub fn default_lognormal() -> Self {
        // z_{0.9}, the standard normal 90% quantile
        const Z90: f64 = 1.281_551_565_544_600_4;
        Self::LogNormal {
            median: 12.0 * HOUR,
            sigma: std::f64::consts::LN_2 / Z90,
        }
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::LogNormal { median, sigma } => LogNormal::new(median.ln(), sigma)
                .expect("valid log-normal parameters")
                .sample(rng),
            Self::Constant { seconds } => seconds,
        }
    }
}

impl Default for DurationModel {
    fn default() -> Self {
        Self::default_lognormal()
    }
}

/// `n` seeded duration samples in seconds.
pub fn duration_model(model: &DurationModel, seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| model.sample(&mut rng)).collect()
}

/// One row of the synthetic mix.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadTemplate {
    pub type_name: String,
    pub executor: String,
    pub demand: ResourceVector,
    pub weight: u32,
    pub n_max: u32,
    pub n_min: u32,
    pub count: u32,
    /// Containers the static baseline gives this type; durations are
    /// measured at this count.
    pub static_containers: u32,
    /// Multiplier on sampled durations.
    pub duration_scale: f64,
    pub per_container_rate: Rational,
}

/// The seven application types of the evaluation mix. GPU types run 1.5x
/// longer than CPU types.
pub fn builtin_templates() -> Vec<WorkloadTemplate> {
    let rows: [(&str, &str, [u64; 3], u32, u32, u32, u32); 7] = [
        ("LR", "MxNet", [2, 0, 8], 1, 32, 20, 8),
        ("MF", "TensorFlow", [2, 0, 6], 2, 32, 20, 8),
        ("CaffeNet", "MPI-Caffe", [4, 0, 6], 4, 8, 6, 4),
        ("VGG-16", "MxNet", [4, 1, 32], 1, 5, 1, 2),
        ("GoogLeNet", "TensorFlow", [6, 1, 16], 1, 5, 1, 2),
        ("AlexNet", "Petuum", [6, 1, 16], 2, 5, 1, 2),
        ("ResNet-50", "MPI-Caffe", [4, 1, 32], 4, 5, 1, 3),
    ];
    rows.iter()
        .map(
            |&(name, exec, demand, weight, n_max, count, fixed)| WorkloadTemplate {
                type_name: name.into(),
                executor: exec.into(),
                demand: ResourceVector::from_units(&demand),
                weight,
                n_max,
                n_min: 1,
                count,
                static_containers: fixed,
                duration_scale: if demand[1] > 0 { 1.5 } else { 1.0 },
                per_container_rate: Rational::from_integer(1.into()),
            },
        )
        .collect()
}

/// Static baseline container counts keyed by application type.
pub fn static_counts(templates: &[WorkloadTemplate]) -> BTreeMap<String, u32> {
    templates
        .iter()
        .map(|t| (t.type_name.clone(), t.static_containers))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorOptions {
    pub mean_interarrival: f64,
    pub durations: DurationModel,
    pub checkpoint_save_cost: Rational,
    pub resume_cost: Rational,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self {
            mean_interarrival: 1200.0,
            durations: DurationModel::default(),
            checkpoint_save_cost: Rational::from_integer(120.into()),
            resume_cost: Rational::from_integer(120.into()),
        }
    }
}

fn millis(seconds: f64) -> BigInt {
    BigInt::from((seconds * 1000.0).round() as u64)
}

/// Shuffles `count` copies of each template uniformly, then draws Poisson
/// arrivals and per-app durations. Ids follow submission order.
pub fn generate(templates: &[WorkloadTemplate], options: &GeneratorOptions, seed: u64) -> Vec<Submission> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<&WorkloadTemplate> = templates
        .iter()
        .flat_map(|t| std::iter::repeat_n(t, t.count as usize))
        .collect();
    order.shuffle(&mut rng);
    let gaps = Exp::new(1.0 / options.mean_interarrival).expect("positive mean");
    let width = order.len().to_string().len().max(2);
    let mut clock = BigInt::from(0);
    let mut out = Vec::with_capacity(order.len());
    for (n, t) in order.into_iter().enumerate() {
        if n > 0 {
            clock += millis(gaps.sample(&mut rng));
        }
        let seconds = options.durations.sample(&mut rng) * t.duration_scale;
        // Work in container-seconds at the static reference count.
        let work = Rational::new(millis(seconds), BigInt::from(1000))
            * &t.per_container_rate
            * BigInt::from(t.static_containers);
        out.push(Submission {
            time: Rational::new(clock.clone(), BigInt::from(1000)),
            spec: ApplicationSpec {
                id: AppId(format!("app-{:0width$}", n + 1)),
                app_type: t.type_name.clone(),
                executor: t.executor.clone(),
                demand: t.demand.clone(),
                weight: t.weight,
                n_max: t.n_max,
                n_min: t.n_min,
                profile: WorkloadProfile {
                    total_work: work,
                    per_container_rate: t.per_container_rate.clone(),
                    checkpoint_save_cost: options.checkpoint_save_cost.clone(),
                    resume_cost: options.resume_cost.clone(),
                },
            },
        });
    }
    out
}

/// The 50-application evaluation workload.
pub fn builtin_workload(seed: u64) -> Vec<Submission> {
    generate(&builtin_templates(), &GeneratorOptions::default(), seed)
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("workload file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("workload file: expected version `{FORMAT_VERSION}`, found `{0}`")]
    Version(String),
    #[error("workload file: app `{app}` field `{field}`: {reason}")]
    Field {
        app: String,
        field: &'static str,
        reason: String,
    },
    #[error("workload file: {0}")]
    Model(#[from] ModelError),
    #[error("workload is not sorted by submission time at app `{0}`")]
    Unsorted(AppId),
}

/// A number written as a TOML integer, float or decimal string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Decimal {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Decimal {
    pub fn as_text(&self) -> String {
        match self {
            Self::Int(v) => v.to_string(),
            Self::Float(v) => format!("{v}"),
            Self::Text(s) => s.clone(),
        }
    }

    pub fn rational(&self) -> Option<Rational> {
        parse_decimal(&self.as_text())
    }

    /// Exact decimal if `r` has one with at most 9 fractional digits,
    /// otherwise a `p/q` string.
    pub fn from_rational(r: &Rational) -> Self {
        if r.is_integer() {
            if let Some(v) = r.to_integer().to_u64() {
                return Self::Int(v);
            }
        }
        let text = crate::model::format_fixed(r, 9);
        let trimmed = text.trim_end_matches('0').trim_end_matches('.').to_string();
        if parse_decimal(&trimmed).as_ref() == Some(r) {
            Self::Text(trimmed)
        } else {
            Self::Text(r.to_string())
        }
    }
}

/// Accepts `p/q` fractions as well as decimals.
pub fn parse_rational(text: &str) -> Option<Rational> {
    match text.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().ok()?;
            let q: BigInt = q.trim().parse().ok()?;
            (q > BigInt::from(0) && p >= BigInt::from(0)).then(|| Rational::new(p, q))
        }
        None => parse_decimal(text),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppRecord {
    pub id: String,
    #[serde(rename = "type", default)]
    pub app_type: String,
    #[serde(default)]
    pub executor: String,
    pub demand: Vec<Decimal>,
    #[serde(default = "one")]
    pub weight: u32,
    pub n_max: u32,
    #[serde(default = "one")]
    pub n_min: u32,
    pub total_work: Decimal,
    #[serde(default = "unit_rate")]
    pub per_container_rate: Decimal,
    #[serde(default = "zero")]
    pub checkpoint_save_cost: Decimal,
    #[serde(default = "zero")]
    pub resume_cost: Decimal,
}

fn one() -> u32 {
    1
}

fn unit_rate() -> Decimal {
    Decimal::Int(1)
}

fn zero() -> Decimal {
    Decimal::Int(0)
}

impl AppRecord {
    pub fn to_spec(&self) -> Result<ApplicationSpec, WorkloadError> {
        let field = |field: &'static str, reason: &str| WorkloadError::Field {
            app: self.id.clone(),
            field,
            reason: reason.into(),
        };
        let number = |field_name: &'static str, d: &Decimal| {
            let text = d.as_text();
            parse_rational(&text).ok_or_else(|| field(field_name, &format!("`{text}` is not a non-negative number")))
        };
        let demand = self
            .demand
            .iter()
            .map(|d| parse_milli(&d.as_text()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| field("demand", &e.to_string()))?;
        Ok(ApplicationSpec {
            id: AppId(self.id.clone()),
            app_type: self.app_type.clone(),
            executor: self.executor.clone(),
            demand: ResourceVector::from_milli(demand),
            weight: self.weight,
            n_max: self.n_max,
            n_min: self.n_min,
            profile: WorkloadProfile {
                total_work: number("total_work", &self.total_work)?,
                per_container_rate: number("per_container_rate", &self.per_container_rate)?,
                checkpoint_save_cost: number("checkpoint_save_cost", &self.checkpoint_save_cost)?,
                resume_cost: number("resume_cost", &self.resume_cost)?,
            },
        })
    }

    pub fn from_spec(spec: &ApplicationSpec) -> Self {
        Self {
            id: spec.id.0.clone(),
            app_type: spec.app_type.clone(),
            executor: spec.executor.clone(),
            demand: spec
                .demand
                .milli()
                .iter()
                .map(|&q| {
                    let s = format_milli(q);
                    s.parse::<u64>().map_or(Decimal::Text(s), Decimal::Int)
                })
                .collect(),
            weight: spec.weight,
            n_max: spec.n_max,
            n_min: spec.n_min,
            total_work: Decimal::from_rational(&spec.profile.total_work),
            per_container_rate: Decimal::from_rational(&spec.profile.per_container_rate),
            checkpoint_save_cost: Decimal::from_rational(&spec.profile.checkpoint_save_cost),
            resume_cost: Decimal::from_rational(&spec.profile.resume_cost),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmissionRecord {
    submit: Decimal,
    #[serde(flatten)]
    app: AppRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WorkloadFile {
    version: String,
    #[serde(default, rename = "app")]
    apps: Vec<SubmissionRecord>,
}

/// Reads a workload file and checks it is sorted by submission time.
pub fn parse_workload(text: &str) -> Result<Vec<Submission>, WorkloadError> {
    let file: WorkloadFile = toml::from_str(text)?;
    if file.version != FORMAT_VERSION {
        return Err(WorkloadError::Version(file.version));
    }
    let mut out: Vec<Submission> = Vec::with_capacity(file.apps.len());
    for rec in &file.apps {
        let spec = rec.app.to_spec()?;
        let time = parse_rational(&rec.submit.as_text()).ok_or_else(|| WorkloadError::Field {
            app: rec.app.id.clone(),
            field: "submit",
            reason: "not a non-negative number".into(),
        })?;
        if out.last().is_some_and(|p| p.time > time) {
            return Err(WorkloadError::Unsorted(spec.id));
        }
        out.push(Submission { time, spec });
    }
    Ok(out)
}

/// Writes submissions in the format read by [`parse_workload`].
pub fn write_workload(subs: &[Submission]) -> String {
    let file = WorkloadFile {
        version: FORMAT_VERSION.into(),
        apps: subs
            .iter()
            .map(|s| SubmissionRecord {
                submit: Decimal::from_rational(&s.time),
                app: AppRecord::from_spec(&s.spec),
            })
            .collect(),
    };
    toml::to_string(&file).expect("workload serializes")
}

/// Seconds as an `f64`, for reporting.
pub fn seconds_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{total_capacity, ClusterSpec};
    use proptest::prelude::*;

    #[test]
    fn builtin_mix_counts_and_rows() {
        let subs = builtin_workload(1);
        assert_eq!(subs.len(), 50);
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for s in &subs {
            *counts.entry(s.spec.app_type.clone()).or_default() += 1;
        }
        let by_row: Vec<usize> = builtin_templates()
            .iter()
            .map(|t| counts[&t.type_name])
            .collect();
        assert_eq!(by_row, vec![20, 20, 6, 1, 1, 1, 1]);
        let google = builtin_templates()
            .into_iter()
            .find(|t| t.type_name == "GoogLeNet")
            .unwrap();
        assert_eq!(google.demand, ResourceVector::from_units(&[6, 1, 16]));
        let fixed: Vec<u32> = builtin_templates().iter().map(|t| t.static_containers).collect();
        assert_eq!(fixed, vec![8, 8, 4, 2, 2, 2, 3]);
    }

    #[test]
    fn arrivals_are_sorted_and_seeded() {
        let a = builtin_workload(7);
        let b = builtin_workload(7);
        let c = builtin_workload(8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.windows(2).all(|w| w[0].time <= w[1].time));
        assert_eq!(a[0].time, Rational::from_integer(0.into()));
        let last = seconds_f64(&a[49].time);
        // 49 gaps of mean 1200 s; loose sanity bounds.
        assert!(last > 20_000.0 && last < 120_000.0, "{last}");
    }

    #[test]
    fn generated_specs_are_valid_and_fit_testbed() {
        let cluster = ClusterSpec::testbed();
        let totals = total_capacity(&cluster);
        for s in builtin_workload(3) {
            s.spec.validate(3).unwrap();
            for k in 0..3 {
                assert!(s.spec.demand.get(k) * u64::from(s.spec.n_min) <= totals.get(k));
            }
            assert!(cluster.slaves().iter().any(|sl| {
                (0..3).all(|k| sl.capacity.get(k) >= s.spec.demand.get(k))
            }));
        }
    }

    #[test]
    fn lognormal_tail_and_median() {
        let mut xs = duration_model(&DurationModel::default(), 11, 10_000);
        let tail = xs.iter().filter(|&&d| d > 6.0 * HOUR).count() as f64 / 1e4;
        assert!((0.87..=0.93).contains(&tail), "{tail}");
        xs.sort_by(f64::total_cmp);
        let median = (xs[4999] + xs[5000]) / 2.0;
        assert!((median / (12.0 * HOUR) - 1.0).abs() <= 0.05, "{median}");
    }

    #[test]
    fn constant_durations_are_equal() {
        let xs = duration_model(&DurationModel::Constant { seconds: 5.0 }, 1, 100);
        assert!(xs.iter().all(|&x| x == 5.0));
    }

    #[test]
    fn workload_file_round_trip() {
        let subs = builtin_workload(5);
        let text = write_workload(&subs);
        assert!(text.starts_with("version = \"dormalloc-v1\""));
        assert_eq!(parse_workload(&text).unwrap(), subs);
    }

    #[test]
    fn workload_file_errors() {
        let bad_version = "version = \"v0\"\n";
        assert!(matches!(
            parse_workload(bad_version),
            Err(WorkloadError::Version(_))
        ));
        let unsorted = r#"
version = "dormalloc-v1"
[[app]]
id = "a"
submit = 10
demand = [1, 0, 2]
n_max = 2
total_work = 100
[[app]]
id = "b"
submit = 5
demand = [1, 0, 2]
n_max = 2
total_work = 100
"#;
        assert!(matches!(
            parse_workload(unsorted),
            Err(WorkloadError::Unsorted(_))
        ));
        let bad_demand = unsorted.replace("demand = [1, 0, 2]\nn_max = 2\ntotal_work = 100\n[[app]]", "demand = [1, -1, 2]\nn_max = 2\ntotal_work = 100\n[[app]]");
        assert!(parse_workload(&bad_demand).is_err());
        assert!(parse_workload("version = ").is_err());
    }

    #[test]
    fn empty_workload_file_is_valid() {
        assert!(parse_workload("version = \"dormalloc-v1\"\n").unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn any_seed_gives_valid_sorted_workloads(seed in any::<u64>()) {
            let subs = builtin_workload(seed);
            prop_assert_eq!(subs.len(), 50);
            prop_assert!(subs.windows(2).all(|w| w[0].time <= w[1].time));
            for s in &subs {
                prop_assert!(s.spec.validate(3).is_ok());
            }
        }
    }
}
