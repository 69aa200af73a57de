//! Fairness- and adjustment-constrained utilization maximization.
//!
//! [`build_problem`] turns a cluster snapshot into a mixed-integer program,
//! [`solve`] runs an LP-based branch and bound over it, and [`brute_force`]
//! enumerates tiny instances exactly for cross-checking. [`allocate`] wraps the
//! whole pipeline and falls back to the previous placement when no feasible
//! allocation is found.

mod bnb;
mod brute;
mod lp;
mod problem;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::drf::{self, DrfMode};
use crate::model::{
    parse_decimal, AllocationMatrix, AppId, ApplicationSpec, ClusterSpec, ModelError, Rational,
};

pub use bnb::solve;
pub use brute::{brute_force, enumeration_size, BRUTE_FORCE_LIMIT};
pub use problem::{
    budgets, build_problem, Column, FairnessBudgetMode, MilpProblem, Row, RowFamily, VarKind, VarRole,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OptimizerError {
    #[error("no applications to allocate")]
    NoApplications,
    #[error("theta `{0}` must be a decimal in [0, 1]")]
    InvalidTheta(String),
    #[error("no theoretical share for application `{0}`")]
    MissingShare(AppId),
    #[error("search space of {0} assignments exceeds the brute-force limit")]
    TooLarge(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A tolerance parameter in `[0, 1]`, held exactly so budget ceilings are
/// computed without floating-point error.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Theta(Rational);

impl Theta {
    pub fn new(value: Rational) -> Result<Self, OptimizerError> {
        if value < Rational::zero() || value > Rational::one() {
            return Err(OptimizerError::InvalidTheta(value.to_string()));
        }
        Ok(Self(value))
    }

    /// Parses a plain decimal such as `0.1` exactly.
    pub fn parse(text: &str) -> Result<Self, OptimizerError> {
        let value = parse_decimal(text).ok_or_else(|| OptimizerError::InvalidTheta(text.into()))?;
        Self::new(value).map_err(|_| OptimizerError::InvalidTheta(text.into()))
    }

    /// Converts through the shortest decimal representation of `value`.
    pub fn from_f64(value: f64) -> Result<Self, OptimizerError> {
        if !value.is_finite() {
            return Err(OptimizerError::InvalidTheta(value.to_string()));
        }
        Self::parse(&format!("{value}"))
    }

    pub fn value(&self) -> &Rational {
        &self.0
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl FromStr for Theta {
    type Err = OptimizerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Limits on the branch-and-bound search. The node limit is deterministic;
/// the wall-clock limit is not, so reproducible runs should leave it unset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveBudget {
    pub max_nodes: Option<u64>,
    pub time_limit: Option<Duration>,
}

impl Default for SolveBudget {
    fn default() -> Self {
        Self {
            max_nodes: Some(2000),
            time_limit: Some(Duration::from_secs(10)),
        }
    }
}

impl SolveBudget {
    pub fn unlimited() -> Self {
        Self {
            max_nodes: None,
            time_limit: None,
        }
    }

    pub fn nodes(n: u64) -> Self {
        Self {
            max_nodes: Some(n),
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Proven optimal.
    Optimal,
    /// Best solution found before the budget ran out.
    FeasibleIncumbent,
    /// No integral point satisfies the constraints.
    Infeasible,
    /// Budget ran out before any feasible point was found.
    NoIncumbent,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, Self::Optimal | Self::FeasibleIncumbent)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Optimal => "optimal",
            Self::FeasibleIncumbent => "feasible",
            Self::Infeasible => "infeasible",
            Self::NoIncumbent => "no-incumbent",
        })
    }
}

/// Result of a solve. Loss and adjustment values are recomputed exactly from
/// the integral placement, not read off the relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: SolveStatus,
    pub x: AllocationMatrix,
    /// `|s_i - hat s_i|` per application.
    pub l: BTreeMap<AppId, Rational>,
    /// Adjustment indicator per carryover application.
    pub r: BTreeMap<AppId, u8>,
    /// Total utilization of `x`.
    pub objective: Rational,
    pub node_count: u64,
    pub wall_time: Duration,
}

impl MilpSolution {
    pub fn total_loss(&self) -> Rational {
        self.l.values().fold(Rational::zero(), |acc, v| acc + v)
    }

    pub fn total_adjusted(&self) -> u64 {
        self.r.values().map(|&v| u64::from(v)).sum()
    }
}

/// Allocation policy knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocatorConfig {
    pub theta1: Theta,
    pub theta2: Theta,
    pub budget: SolveBudget,
    pub drf_mode: DrfMode,
    pub fairness_mode: FairnessBudgetMode,
}

impl AllocatorConfig {
    pub fn new(theta1: Theta, theta2: Theta) -> Self {
        Self {
            theta1,
            theta2,
            budget: SolveBudget::default(),
            drf_mode: DrfMode::Weighted,
            fairness_mode: FairnessBudgetMode::Ceiling,
        }
    }
}

/// What [`allocate_detailed`] decided and why.
#[derive(Debug, Clone)]
pub struct AllocationOutcome {
    pub allocation: AllocationMatrix,
    /// `None` when the program could not even be built.
    pub solution: Option<MilpSolution>,
    /// True when the previous allocation was kept because no feasible
    /// solution was found.
    pub fell_back: bool,
    pub theoretical: BTreeMap<AppId, Rational>,
}

/// Recomputes the next allocation for the running set `apps`.
pub fn allocate(
    apps: &[ApplicationSpec],
    cluster: &ClusterSpec,
    prev: &AllocationMatrix,
    config: &AllocatorConfig,
) -> AllocationMatrix {
    allocate_detailed(apps, cluster, prev, config).allocation
}

/// Like [`allocate`], also reporting solver status and theoretical shares.
pub fn allocate_detailed(
    apps: &[ApplicationSpec],
    cluster: &ClusterSpec,
    prev: &AllocationMatrix,
    config: &AllocatorConfig,
) -> AllocationOutcome {
    let theoretical = drf::theoretical_shares(apps, cluster, config.drf_mode);
    let fallback = prev.restricted(|a| apps.iter().any(|s| &s.id == a));
    if apps.is_empty() {
        return AllocationOutcome {
            allocation: AllocationMatrix::new(),
            solution: None,
            fell_back: false,
            theoretical,
        };
    }
    let problem = match build_problem(
        apps,
        cluster,
        prev,
        &theoretical,
        config.theta1.clone(),
        config.theta2.clone(),
        config.fairness_mode,
    ) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("allocation program rejected: {e}; keeping previous placement");
            return AllocationOutcome {
                allocation: fallback,
                solution: None,
                fell_back: true,
                theoretical,
            };
        }
    };
    let solution = solve(&problem, &config.budget);
    log::debug!(
        "{problem}: {} after {} nodes, objective {}",
        solution.status,
        solution.node_count,
        solution.objective
    );
    if solution.status.has_solution() {
        AllocationOutcome {
            allocation: solution.x.clone(),
            solution: Some(solution),
            fell_back: false,
            theoretical,
        }
    } else {
        log::warn!(
            "allocation {}; keeping previous placement",
            solution.status
        );
        AllocationOutcome {
            allocation: fallback,
            solution: Some(solution),
            fell_back: true,
            theoretical,
        }
    }
}
