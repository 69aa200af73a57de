//! Command-line front end: `solve`, `simulate` and `gen-workload`.
//!
//! Exit codes: `0` success (optimal or feasible incumbent), `1` malformed
//! input or configuration, `2` proven infeasible, `3` solver budget exhausted
//! without a feasible point.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjustment::AdjustmentCosts;
use crate::model::{
    format_fixed, parse_milli, AllocationMatrix, AppId, ApplicationSpec, ClusterSpec, ModelError,
    Rational, ResourceVector, Slave, SlaveId, WorkloadProfile,
};
use crate::optimizer::{
    self, AllocatorConfig, FairnessBudgetMode, OptimizerError, SolveBudget, SolveStatus, Theta,
};
use crate::simulator::{self, Policy, SimConfig, SimError, SimTrace, StaticPolicy, StepOutcome};
use crate::workload::{
    self, builtin_templates, builtin_workload, static_counts, Decimal, WorkloadError, FORMAT_VERSION,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_NO_INCUMBENT: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Parser)]
#[command(name = "dormalloc", version, about = "Utilization-fairness container allocator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one reallocation from a state file.
    Solve(SolveArgs),
    /// Replay a workload and write metric traces and a summary.
    Simulate(SimulateArgs),
    /// Write the synthetic evaluation workload as a workload file.
    GenWorkload(GenWorkloadArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// θ1 = 0.2, θ2 = 0.1
    #[value(name = "dorm-1")]
    Dorm1,
    /// θ1 = 0.1, θ2 = 0.2
    #[value(name = "dorm-2")]
    Dorm2,
    /// θ1 = 0.1, θ2 = 0.1
    #[value(name = "dorm-3")]
    Dorm3,
}

impl Preset {
    pub fn thetas(self) -> (&'static str, &'static str) {
        match self {
            Self::Dorm1 => ("0.2", "0.1"),
            Self::Dorm2 => ("0.1", "0.2"),
            Self::Dorm3 => ("0.1", "0.1"),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ThetaArgs {
    /// Named (θ1, θ2) pair; explicit --theta1/--theta2 take precedence.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Fairness-loss tolerance in [0, 1].
    #[arg(long)]
    pub theta1: Option<String>,
    /// Adjustment-overhead tolerance in [0, 1].
    #[arg(long)]
    pub theta2: Option<String>,
}

impl ThetaArgs {
    /// Overrides from flags: preset first, then explicit values.
    fn resolve(&self) -> (Option<String>, Option<String>) {
        let (mut t1, mut t2) = match self.preset {
            Some(p) => {
                let (a, b) = p.thetas();
                (Some(a.to_string()), Some(b.to_string()))
            }
            None => (None, None),
        };
        if let Some(v) = &self.theta1 {
            t1 = Some(v.clone());
        }
        if let Some(v) = &self.theta2 {
            t2 = Some(v.clone());
        }
        (t1, t2)
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// State file with cluster, applications, previous placement and thetas.
    pub state: PathBuf,
    #[command(flatten)]
    pub thetas: ThetaArgs,
    /// Wall-clock solver budget in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub budget: f64,
    /// Branch-and-bound node budget.
    #[arg(long, default_value_t = 2000)]
    pub nodes: u64,
    /// Solution file; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Dorm,
    Static,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Run configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyKind>,
    #[command(flatten)]
    pub thetas: ThetaArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated seconds.
    #[arg(long)]
    pub horizon: Option<String>,
    /// Seconds between periodic metric samples.
    #[arg(long)]
    pub cadence: Option<String>,
    /// Optional wall-clock budget per reallocation in seconds. Runs become
    /// machine-dependent when it binds.
    #[arg(long)]
    pub budget: Option<String>,
    /// Branch-and-bound node budget per reallocation.
    #[arg(long)]
    pub nodes: Option<u64>,
    /// `builtin` or the path of a workload file.
    #[arg(long)]
    pub workload: Option<String>,
    /// Static-policy output directory, or its apps.csv / metrics.csv, for
    /// paired comparison in the summary.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenWorkloadArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Workload file; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlaveConfig {
    pub id: String,
    pub capacity: Vec<Decimal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub resources: Vec<String>,
    #[serde(rename = "slave")]
    pub slaves: Vec<SlaveConfig>,
}

impl ClusterConfig {
    pub fn to_cluster(&self) -> Result<ClusterSpec, CliError> {
        let slaves = self
            .slaves
            .iter()
            .map(|s| {
                let caps = s
                    .capacity
                    .iter()
                    .map(|d| parse_milli(&d.as_text()))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CliError::Config(format!("slave `{}` capacity: {e}", s.id)))?;
                Ok(Slave {
                    id: SlaveId(s.id.clone()),
                    capacity: ResourceVector::from_milli(caps),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(ClusterSpec::new(self.resources.clone(), slaves)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FairnessBudgetKind {
    #[default]
    Ceiling,
    Continuous,
}

/// Everything a simulation run depends on. Echoed into the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: String,
    pub policy: PolicyKind,
    pub theta1: Decimal,
    pub theta2: Decimal,
    pub seed: u64,
    /// Simulated seconds.
    pub horizon: Decimal,
    /// Seconds between periodic metric samples.
    pub cadence: Decimal,
    pub max_nodes: u64,
    pub budget_seconds: Option<Decimal>,
    pub fairness_budget: FairnessBudgetKind,
    /// Seconds per container created or destroyed.
    pub churn_per_container: Decimal,
    /// `builtin` or a workload file path.
    pub workload: String,
    pub out: String,
    /// Built-in testbed when absent.
    pub cluster: Option<ClusterConfig>,
    pub static_counts: BTreeMap<String, u32>,
}

/// Node budget per reallocation in simulations.
pub const DEFAULT_SIM_NODES: u64 = 25;

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: FORMAT_VERSION.into(),
            policy: PolicyKind::Dorm,
            theta1: Decimal::Text("0.1".into()),
            theta2: Decimal::Text("0.1".into()),
            seed: 0,
            horizon: Decimal::Int(24 * 3600),
            cadence: Decimal::Int(60),
            max_nodes: DEFAULT_SIM_NODES,
            budget_seconds: None,
            fairness_budget: FairnessBudgetKind::Ceiling,
            churn_per_container: Decimal::Text("1.5".into()),
            workload: "builtin".into(),
            out: "out".into(),
            cluster: None,
            static_counts: static_counts(&builtin_templates()),
        }
    }
}

fn decimal_field(name: &str, d: &Decimal) -> Result<Rational, CliError> {
    workload::parse_rational(&d.as_text())
        .ok_or_else(|| CliError::Config(format!("`{name}` = `{}` is not a non-negative number", d.as_text())))
}

fn theta_field(name: &str, d: &Decimal) -> Result<Theta, CliError> {
    let r = decimal_field(name, d)?;
    Theta::new(r).map_err(|_| CliError::Config(format!("`{name}` = `{}` must lie in [0, 1]", d.as_text())))
}

/// A validated configuration ready to run.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub cluster: ClusterSpec,
    pub policy: Policy,
    pub sim: SimConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let config: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        if config.version != FORMAT_VERSION {
            return Err(format!(
                "expected version `{FORMAT_VERSION}`, found `{}`",
                config.version
            ));
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn allocator(&self) -> Result<AllocatorConfig, CliError> {
        let mut alloc = AllocatorConfig::new(
            theta_field("theta1", &self.theta1)?,
            theta_field("theta2", &self.theta2)?,
        );
        alloc.budget = SolveBudget {
            max_nodes: Some(self.max_nodes.max(1)),
            time_limit: match &self.budget_seconds {
                Some(d) => {
                    let s = decimal_field("budget_seconds", d)?;
                    Some(Duration::from_secs_f64(workload::seconds_f64(&s)))
                }
                None => None,
            },
        };
        alloc.fairness_mode = match self.fairness_budget {
            FairnessBudgetKind::Ceiling => FairnessBudgetMode::Ceiling,
            FairnessBudgetKind::Continuous => FairnessBudgetMode::Continuous,
        };
        Ok(alloc)
    }

    pub fn resolve(&self) -> Result<ResolvedRun, CliError> {
        if self.version != FORMAT_VERSION {
            return Err(CliError::Config(format!(
                "expected version `{FORMAT_VERSION}`, found `{}`",
                self.version
            )));
        }
        let cluster = match &self.cluster {
            Some(c) => c.to_cluster()?,
            None => ClusterSpec::testbed(),
        };
        let horizon = decimal_field("horizon", &self.horizon)?;
        let cadence = decimal_field("cadence", &self.cadence)?;
        if cadence <= Rational::from_integer(0.into()) {
            return Err(CliError::Config("`cadence` must be positive".into()));
        }
        let allocator = self.allocator()?;
        let policy = match self.policy {
            PolicyKind::Dorm => Policy::Dorm(allocator),
            PolicyKind::Static => Policy::Static(StaticPolicy {
                counts: self.static_counts.clone(),
            }),
        };
        let sim = SimConfig {
            horizon,
            cadence,
            costs: AdjustmentCosts {
                churn_per_container: decimal_field("churn_per_container", &self.churn_per_container)?,
            },
            forced_restarts: Vec::new(),
        };
        Ok(ResolvedRun {
            cluster,
            policy,
            sim,
        })
    }

    pub fn load_workload(&self) -> Result<Vec<workload::Submission>, CliError> {
        if self.workload == "builtin" {
            return Ok(builtin_workload(self.seed));
        }
        let path = Path::new(&self.workload);
        Ok(workload::parse_workload(&read(path)?)?)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateApp {
    id: String,
    #[serde(rename = "type", default)]
    app_type: String,
    demand: Vec<Decimal>,
    #[serde(default = "one")]
    weight: u32,
    n_max: u32,
    #[serde(default = "one")]
    n_min: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Placement {
    app: String,
    slave: String,
    containers: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    version: String,
    theta1: Option<Decimal>,
    theta2: Option<Decimal>,
    cluster: ClusterConfig,
    #[serde(default, rename = "app")]
    apps: Vec<StateApp>,
    #[serde(default)]
    prev: Vec<Placement>,
}

#[derive(Debug, Serialize)]
struct AppOutcome {
    id: String,
    containers: u64,
    loss: f64,
    loss_exact: String,
    adjusted: u8,
}

#[derive(Debug, Serialize)]
struct SolutionFile {
    version: String,
    status: String,
    theta1: String,
    theta2: String,
    objective: f64,
    objective_exact: String,
    fairness_budget: String,
    adjustment_budget: u64,
    nodes: u64,
    x: Vec<Placement>,
    app: Vec<AppOutcome>,
}

fn theta_text(t: &Theta) -> String {
    Decimal::from_rational(t.value()).as_text()
}

fn state_spec(a: &StateApp) -> Result<ApplicationSpec, CliError> {
    let demand = a
        .demand
        .iter()
        .map(|d| parse_milli(&d.as_text()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(format!("app `{}` field `demand`: {e}", a.id)))?;
    let one = Rational::from_integer(1.into());
    Ok(ApplicationSpec {
        id: AppId(a.id.clone()),
        app_type: a.app_type.clone(),
        executor: String::new(),
        demand: ResourceVector::from_milli(demand),
        weight: a.weight,
        n_max: a.n_max,
        n_min: a.n_min,
        profile: WorkloadProfile {
            total_work: one.clone(),
            per_container_rate: one,
            checkpoint_save_cost: Rational::from_integer(0.into()),
            resume_cost: Rational::from_integer(0.into()),
        },
    })
}

fn cmd_solve(args: &SolveArgs) -> Result<u8, CliError> {
    let text = read(&args.state)?;
    let state: StateFile = toml::from_str(&text).map_err(|e| CliError::Parse {
        path: args.state.clone(),
        message: e.to_string(),
    })?;
    if state.version != FORMAT_VERSION {
        return Err(CliError::Parse {
            path: args.state.clone(),
            message: format!("expected version `{FORMAT_VERSION}`, found `{}`", state.version),
        });
    }
    let (flag1, flag2) = args.thetas.resolve();
    let pick = |flag: Option<String>, file: Option<Decimal>| {
        flag.map(Decimal::Text)
            .or(file)
            .unwrap_or_else(|| Decimal::Text("0.1".into()))
    };
    let theta1 = theta_field("theta1", &pick(flag1, state.theta1))?;
    let theta2 = theta_field("theta2", &pick(flag2, state.theta2))?;
    let cluster = state.cluster.to_cluster()?;
    if state.apps.is_empty() {
        return Err(OptimizerError::NoApplications.into());
    }
    let apps = state.apps.iter().map(state_spec).collect::<Result<Vec<_>, _>>()?;
    let mut prev = AllocationMatrix::new();
    for p in &state.prev {
        prev.set(AppId(p.app.clone()), SlaveId(p.slave.clone()), p.containers);
    }
    let mut config = AllocatorConfig::new(theta1.clone(), theta2.clone());
    config.budget = SolveBudget {
        max_nodes: Some(args.nodes.max(1)),
        time_limit: Some(Duration::from_secs_f64(args.budget.max(0.0))),
    };
    let outcome = optimizer::allocate_detailed(&apps, &cluster, &prev, &config);
    let problem = optimizer::build_problem(
        &apps,
        &cluster,
        &prev,
        &outcome.theoretical,
        theta1.clone(),
        theta2.clone(),
        config.fairness_mode,
    )?;
    let solution = outcome.solution.ok_or_else(|| {
        CliError::Config("allocation program could not be built".into())
    })?;
    let file = SolutionFile {
        version: FORMAT_VERSION.into(),
        status: solution.status.to_string(),
        theta1: theta_text(&theta1),
        theta2: theta_text(&theta2),
        objective: workload::seconds_f64(&solution.objective),
        objective_exact: solution.objective.to_string(),
        fairness_budget: Decimal::from_rational(&problem.fairness_budget).as_text(),
        adjustment_budget: problem.adjustment_budget,
        nodes: solution.node_count,
        x: solution
            .x
            .iter()
            .map(|(a, s, n)| Placement {
                app: a.0.clone(),
                slave: s.0.clone(),
                containers: n,
            })
            .collect(),
        app: apps
            .iter()
            .map(|a| {
                let loss = solution.l.get(&a.id).cloned().unwrap_or_default();
                AppOutcome {
                    id: a.id.0.clone(),
                    containers: crate::model::containers_of(&solution.x, &a.id),
                    loss: workload::seconds_f64(&loss),
                    loss_exact: loss.to_string(),
                    adjusted: solution.r.get(&a.id).copied().unwrap_or(0),
                }
            })
            .collect(),
    };
    let text = toml::to_string(&file).expect("solution serializes");
    match &args.out {
        Some(path) => write(path, text)?,
        None => print!("{text}"),
    }
    Ok(match solution.status {
        SolveStatus::Optimal | SolveStatus::FeasibleIncumbent => EXIT_OK,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::NoIncumbent => EXIT_NO_INCUMBENT,
    })
}

fn fixed(r: &Rational) -> String {
    format_fixed(r, 9)
}

fn opt_fixed(r: &Option<Rational>) -> String {
    r.as_ref().map(fixed).unwrap_or_default()
}

pub fn metrics_csv(trace: &SimTrace) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "time".to_string(),
        "utilization".into(),
        "fairness_loss".into(),
        "adjustment_overhead".into(),
    ];
    header.extend(trace.resource_names.iter().map(|n| format!("u_{n}")));
    w.write_record(&header)?;
    for s in &trace.samples {
        let mut rec = vec![
            fixed(&s.time),
            fixed(&s.utilization),
            fixed(&s.fairness_loss),
            s.adjustment_overhead.to_string(),
        ];
        rec.extend(s.per_resource_util.iter().map(fixed));
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv"))
}

pub fn apps_csv(trace: &SimTrace) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "app_id",
        "type",
        "submit",
        "start",
        "complete",
        "downtime",
        "containers_time_integral",
    ])?;
    for a in &trace.apps {
        w.write_record([
            a.app_id.as_str(),
            &a.app_type,
            &fixed(&a.submit),
            &opt_fixed(&a.start),
            &opt_fixed(&a.complete),
            &fixed(&a.downtime),
            &fixed(&a.containers_time_integral),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv"))
}

pub fn events_csv(trace: &SimTrace) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "event", "app", "detail"])?;
    for e in &trace.events {
        w.write_record([
            fixed(&e.time).as_str(),
            e.kind,
            e.app.as_ref().map_or("", |a| a.as_str()),
            &e.detail,
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv"))
}

/// Turnaround times and utilization samples read back from a prior run.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Baseline {
    pub turnaround: Option<BTreeMap<AppId, Rational>>,
    pub utilization: Option<Vec<(Rational, Rational)>>,
}

fn csv_number(path: &Path, field: &str, text: &str) -> Result<Rational, CliError> {
    workload::parse_rational(text).ok_or_else(|| CliError::Parse {
        path: path.to_path_buf(),
        message: format!("field `{field}`: `{text}` is not a number"),
    })
}

fn read_baseline_file(path: &Path, into: &mut Baseline) -> Result<(), CliError> {
    let text = read(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CliError::Parse {
            path: path.to_path_buf(),
            message: format!("missing column `{name}`"),
        })
    };
    match headers.get(0) {
        Some("app_id") => {
            let (submit, complete) = (col("submit")?, col("complete")?);
            let mut map = BTreeMap::new();
            for rec in r.records() {
                let rec = rec?;
                let done = &rec[complete];
                if done.is_empty() {
                    continue;
                }
                let t = csv_number(path, "complete", done)? - csv_number(path, "submit", &rec[submit])?;
                map.insert(AppId(rec[0].to_string()), t);
            }
            into.turnaround = Some(map);
        }
        Some("time") => {
            let util = col("utilization")?;
            let mut points = Vec::new();
            for rec in r.records() {
                let rec = rec?;
                points.push((
                    csv_number(path, "time", &rec[0])?,
                    csv_number(path, "utilization", &rec[util])?,
                ));
            }
            into.utilization = Some(points);
        }
        _ => {
            return Err(CliError::Parse {
                path: path.to_path_buf(),
                message: "neither an apps nor a metrics trace".into(),
            })
        }
    }
    Ok(())
}

pub fn load_baseline(path: &Path) -> Result<Baseline, CliError> {
    let mut baseline = Baseline::default();
    if path.is_dir() {
        for name in ["apps.csv", "metrics.csv"] {
            let file = path.join(name);
            if file.exists() {
                read_baseline_file(&file, &mut baseline)?;
            }
        }
    } else {
        read_baseline_file(path, &mut baseline)?;
        // A sibling trace from the same run completes the pair.
        if let Some(dir) = path.parent() {
            for name in ["apps.csv", "metrics.csv"] {
                let file = dir.join(name);
                if file != path && file.exists() {
                    let mut extra = Baseline::default();
                    if read_baseline_file(&file, &mut extra).is_ok() {
                        baseline.turnaround = baseline.turnaround.or(extra.turnaround);
                        baseline.utilization = baseline.utilization.or(extra.utilization);
                    }
                }
            }
        }
    }
    Ok(baseline)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub policy: String,
    pub config: RunConfig,
    pub applications: usize,
    pub completed_apps: usize,
    pub skipped_apps: usize,
    pub reallocations: usize,
    pub fallback_reallocations: usize,
    pub mean_utilization: f64,
    pub mean_fairness_loss: f64,
    pub max_fairness_loss: f64,
    pub total_affected_apps: u64,
    pub mean_speedup_vs_static: Option<f64>,
    pub utilization_ratio_vs_static: Option<f64>,
}

pub fn summarize(config: &RunConfig, trace: &SimTrace, baseline: Option<&Baseline>) -> Summary {
    let zero = Rational::from_integer(0.into());
    let end = &trace.end_time;
    let mean_util = trace.mean_utilization(&zero, end);
    let speedup = baseline
        .and_then(|b| b.turnaround.as_ref())
        .and_then(|t| simulator::mean_speedup(t, &trace.turnaround()));
    let util_ratio = baseline.and_then(|b| b.utilization.as_ref()).and_then(|points| {
        let base = simulator::time_weighted_mean(points, &zero, end);
        (base > zero).then(|| &mean_util / base)
    });
    Summary {
        version: FORMAT_VERSION.into(),
        policy: trace.policy.into(),
        config: config.clone(),
        applications: trace.apps.len(),
        completed_apps: trace.apps.iter().filter(|a| a.complete.is_some()).count(),
        skipped_apps: trace.apps.iter().filter(|a| a.skipped).count(),
        reallocations: trace.steps.len(),
        fallback_reallocations: trace
            .steps
            .iter()
            .filter(|s| s.outcome == StepOutcome::Fallback)
            .count(),
        mean_utilization: workload::seconds_f64(&mean_util),
        mean_fairness_loss: workload::seconds_f64(&trace.mean_fairness_loss(&zero, end)),
        max_fairness_loss: workload::seconds_f64(&trace.max_fairness_loss()),
        total_affected_apps: trace.total_affected(),
        mean_speedup_vs_static: speedup.as_ref().map(workload::seconds_f64),
        utilization_ratio_vs_static: util_ratio.as_ref().map(workload::seconds_f64),
    }
}

fn apply_flags(config: &mut RunConfig, args: &SimulateArgs) {
    if let Some(p) = args.policy {
        config.policy = p;
    }
    let (t1, t2) = args.thetas.resolve();
    if let Some(t) = t1 {
        config.theta1 = Decimal::Text(t);
    }
    if let Some(t) = t2 {
        config.theta2 = Decimal::Text(t);
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(h) = &args.horizon {
        config.horizon = Decimal::Text(h.clone());
    }
    if let Some(c) = &args.cadence {
        config.cadence = Decimal::Text(c.clone());
    }
    if let Some(b) = &args.budget {
        config.budget_seconds = Some(Decimal::Text(b.clone()));
    }
    if let Some(n) = args.nodes {
        config.max_nodes = n;
    }
    if let Some(w) = &args.workload {
        config.workload = w.clone();
    }
    if let Some(o) = &args.out {
        config.out = o.to_string_lossy().into_owned();
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<u8, CliError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::parse(&read(path)?).map_err(|message| CliError::Parse {
            path: path.clone(),
            message,
        })?,
        None => RunConfig::default(),
    };
    apply_flags(&mut config, args);
    let run = config.resolve()?;
    let subs = config.load_workload()?;
    if subs.last().is_some_and(|s| s.time > run.sim.horizon) {
        log::warn!("horizon ends before the last submission");
    }
    let baseline = args.baseline.as_deref().map(load_baseline).transpose()?;
    log::info!(
        "simulating {} applications under {} policy",
        subs.len(),
        run.policy.name()
    );
    let trace = simulator::run(&subs, &run.cluster, &run.policy, &run.sim)?;
    let out = PathBuf::from(&config.out);
    fs::create_dir_all(&out).map_err(|source| CliError::Io {
        path: out.clone(),
        source,
    })?;
    write(&out.join("metrics.csv"), metrics_csv(&trace)?)?;
    write(&out.join("apps.csv"), apps_csv(&trace)?)?;
    write(&out.join("events.csv"), events_csv(&trace)?)?;
    write(&out.join("config.toml"), config.to_toml())?;
    let summary = summarize(&config, &trace, baseline.as_ref());
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(&out.join("summary.json"), json + "\n")?;
    Ok(EXIT_OK)
}

fn cmd_gen_workload(args: &GenWorkloadArgs) -> Result<u8, CliError> {
    let text = workload::write_workload(&builtin_workload(args.seed));
    match &args.out {
        Some(path) => write(path, text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

pub fn run(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::GenWorkload(a) => cmd_gen_workload(a),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors go to standard error.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_map_to_thetas() {
        let args = ThetaArgs {
            preset: Some(Preset::Dorm1),
            theta1: None,
            theta2: Some("0.3".into()),
        };
        assert_eq!(args.resolve(), (Some("0.2".into()), Some("0.3".into())));
        assert_eq!(Preset::Dorm3.thetas(), ("0.1", "0.1"));
    }

    #[test]
    fn default_config_round_trips_through_toml_and_json() {
        let config = RunConfig {
            cluster: Some(ClusterConfig {
                resources: vec!["cpu".into(), "ram".into()],
                slaves: vec![SlaveConfig {
                    id: "s1".into(),
                    capacity: vec![Decimal::Int(4), Decimal::Text("0.5".into())],
                }],
            }),
            budget_seconds: Some(Decimal::Float(2.5)),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::parse(&config.to_toml()).unwrap(), config);
        let json = serde_json::to_string(&config).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), config);
    }

    #[test]
    fn config_validation() {
        let bad = RunConfig {
            theta1: Decimal::Text("1.5".into()),
            ..RunConfig::default()
        };
        assert!(matches!(bad.resolve(), Err(CliError::Config(_))));
        let bad = RunConfig {
            cadence: Decimal::Int(0),
            ..RunConfig::default()
        };
        assert!(matches!(bad.resolve(), Err(CliError::Config(_))));
        assert!(RunConfig::parse("version = \"v0\"").is_err());
        assert!(RunConfig::parse("version = \"dormalloc-v1\"\nbogus = 1").is_err());
    }
}
