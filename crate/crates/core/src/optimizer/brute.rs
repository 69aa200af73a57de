//! Exhaustive enumeration for tiny instances.

use std::time::Instant;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};

use crate::model::{total_capacity, Rational};

use super::bnb::{solution, Candidate};
use super::problem::MilpProblem;
use super::{MilpSolution, OptimizerError, SolveStatus};

/// Largest [`enumeration_size`] accepted by [`brute_force`].
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

/// Number of per-slave count vectors the enumeration may visit before
/// capacity pruning: each application spreads at most `n_max` containers over
/// `b` slaves in `C(n_max + b, b)` ways.
pub fn enumeration_size(p: &MilpProblem) -> u128 {
    let b = p.num_slaves() as u128;
    p.apps.iter().fold(1u128, |space, a| {
        let n = u128::from(a.n_max);
        // C(n + b, b) built incrementally stays integral at every step.
        let ways = (1..=b).fold(1u128, |c, k| c.saturating_mul(n + k) / k);
        space.saturating_mul(ways)
    })
}

struct Enum<'a> {
    apps: usize,
    slaves: usize,
    m: usize,
    demand: Vec<Vec<u64>>,
    n_min: Vec<u64>,
    n_max: Vec<u64>,
    prev: Vec<Vec<u64>>,
    carry: Vec<bool>,
    /// Objective contribution per container, scaled by `denom`.
    gain: Vec<i128>,
    denom: i128,
    loss_table: Vec<Vec<Rational>>,
    loss_f: Vec<Vec<f64>>,
    loss_budget: &'a Rational,
    loss_budget_f: f64,
    adjust_budget: u64,
    rem: Vec<Vec<u64>>,
    x: Vec<Vec<u64>>,
    leaves: u64,
    best: Option<(i128, Rational, usize, Vec<Vec<u64>>)>,
}

impl Enum<'_> {
    fn dfs(&mut self, pos: usize, partial_loss: f64, adjusted: u64) {
        if pos == self.apps * self.slaves {
            self.leaf();
            return;
        }
        let (i, j) = (pos / self.slaves, pos % self.slaves);
        let so_far: u64 = self.x[i][..j].iter().sum();
        let mut ub = self.n_max[i] - so_far;
        for k in 0..self.m {
            if self.demand[i][k] > 0 {
                ub = ub.min(self.rem[j][k] / self.demand[i][k]);
            }
        }
        for v in 0..=ub {
            self.x[i][j] = v;
            for k in 0..self.m {
                self.rem[j][k] -= v * self.demand[i][k];
            }
            if j + 1 == self.slaves {
                let n = so_far + v;
                let adj = adjusted + u64::from(self.carry[i] && self.x[i] != self.prev[i]);
                let loss = partial_loss + self.loss_f[i][n as usize];
                if n >= self.n_min[i]
                    && adj <= self.adjust_budget
                    && loss <= self.loss_budget_f + 1e-9
                {
                    self.dfs(pos + 1, loss, adj);
                }
            } else {
                self.dfs(pos + 1, partial_loss, adjusted);
            }
            for k in 0..self.m {
                self.rem[j][k] += v * self.demand[i][k];
            }
        }
        self.x[i][j] = 0;
    }

    fn leaf(&mut self) {
        self.leaves += 1;
        let counts: Vec<u64> = self.x.iter().map(|r| r.iter().sum()).collect();
        let obj: i128 = counts
            .iter()
            .zip(&self.gain)
            .map(|(&n, &g)| n as i128 * g)
            .sum();
        if let Some((best, ..)) = &self.best {
            if obj < *best {
                return;
            }
        }
        let loss = counts
            .iter()
            .enumerate()
            .fold(Rational::zero(), |acc, (i, &n)| {
                acc + &self.loss_table[i][n as usize]
            });
        if &loss > self.loss_budget {
            return;
        }
        let adjusted = (0..self.apps)
            .filter(|&i| self.carry[i] && self.x[i] != self.prev[i])
            .count();
        let replace = match &self.best {
            None => true,
            Some((b_obj, b_loss, b_adj, _)) => {
                obj > *b_obj
                    || (obj == *b_obj
                        && (loss < *b_loss || (loss == *b_loss && adjusted < *b_adj)))
            }
        };
        if replace {
            self.best = Some((obj, loss, adjusted, self.x.clone()));
        }
    }
}

/// Enumerates every integral placement and returns the best one.
///
/// Ties on utilization go to lower total loss, then fewer adjusted
/// applications, then the lexicographically smallest placement in
/// (app, slave) order.
pub fn brute_force(p: &MilpProblem) -> Result<MilpSolution, OptimizerError> {
    let start = Instant::now();
    let space = enumeration_size(p);
    if space > BRUTE_FORCE_LIMIT {
        return Err(OptimizerError::TooLarge(space.to_string()));
    }
    let totals = total_capacity(&p.cluster);
    let m = p.cluster.num_resources();
    let denom: i128 = (0..m).fold(1i128, |acc, k| acc.lcm(&i128::from(totals.get(k))));
    let gain = p
        .apps
        .iter()
        .map(|a| {
            (0..m)
                .map(|k| i128::from(a.demand.get(k)) * (denom / i128::from(totals.get(k))))
                .sum()
        })
        .collect();
    let loss_table: Vec<Vec<Rational>> = p
        .apps
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let k = p.dominant[i];
            let per = Rational::new(BigInt::from(a.demand.get(k)), BigInt::from(totals.get(k)));
            (0..=a.n_max)
                .map(|n| (&per * BigInt::from(n) - &p.theoretical[i]).abs())
                .collect()
        })
        .collect();
    let loss_f = loss_table
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| num_traits::ToPrimitive::to_f64(v).unwrap_or(f64::INFINITY))
                .collect()
        })
        .collect();
    let mut e = Enum {
        apps: p.num_apps(),
        slaves: p.num_slaves(),
        m,
        demand: p.apps.iter().map(|a| a.demand.milli().to_vec()).collect(),
        n_min: p.apps.iter().map(|a| u64::from(a.n_min)).collect(),
        n_max: p.apps.iter().map(|a| u64::from(a.n_max)).collect(),
        prev: (0..p.num_apps())
            .map(|i| (0..p.num_slaves()).map(|j| p.prev_count(i, j)).collect())
            .collect(),
        carry: p.carryover.clone(),
        gain,
        denom,
        loss_table,
        loss_f,
        loss_budget: &p.fairness_budget,
        loss_budget_f: num_traits::ToPrimitive::to_f64(&p.fairness_budget).unwrap_or(f64::NAN),
        adjust_budget: p.adjustment_budget,
        rem: p
            .cluster
            .slaves()
            .iter()
            .map(|s| s.capacity.milli().to_vec())
            .collect(),
        x: vec![vec![0; p.num_slaves()]; p.num_apps()],
        leaves: 0,
        best: None,
    };
    e.dfs(0, 0.0, 0);
    let leaves = e.leaves;
    let best = e.best.take().map(|(obj, _, _, x)| {
        let loss = x
            .iter()
            .enumerate()
            .map(|(i, row)| e.loss_table[i][row.iter().sum::<u64>() as usize].clone())
            .collect();
        let adjusted = x
            .iter()
            .enumerate()
            .map(|(i, row)| e.carry[i] && row != &e.prev[i])
            .collect();
        Candidate {
            x,
            objective: Rational::new(BigInt::from(obj), BigInt::from(e.denom)),
            loss,
            adjusted,
        }
    });
    let status = if best.is_some() {
        SolveStatus::Optimal
    } else {
        SolveStatus::Infeasible
    };
    Ok(solution(p, best, status, leaves, start))
}
