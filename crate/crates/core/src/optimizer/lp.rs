//! Bounded-variable dual simplex on a dense Tucker tableau.
//!
//! Variables `0..n` are structural columns, `n..n+m` are row activities. Each
//! tableau row expresses one basic variable as a linear function of the
//! nonbasic ones. The method needs a dual-feasible start: every column with a
//! positive objective coefficient must have a finite upper bound, every column
//! with a negative one a finite lower bound. Bound changes keep the basis, so
//! a solved tableau can be cloned and re-optimized after branching.
//!
//! Pivoting uses slightly perturbed costs so that the many zero-cost columns
//! do not leave the dual degenerate and stall the ratio test. [`Tableau::bound`]
//! recovers a valid upper bound for the unperturbed objective.

const PRIMAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-13;
const PERTURBATION: f64 = 1e-8;

/// Deterministic cost perturbation for structural column `c`: away from the
/// finite bound a zero-cost column rests on, same sign as a nonzero cost.
fn perturbed(c: usize, cost: f64, lo: f64, hi: f64) -> f64 {
    let spread = 1.0 + ((c as u64).wrapping_mul(2_654_435_761) % 1000) as f64 / 1000.0;
    let eps = PERTURBATION * spread * (1.0 + cost.abs());
    if cost > 0.0 || (cost == 0.0 && !lo.is_finite() && hi.is_finite()) {
        cost + eps
    } else if cost < 0.0 || lo.is_finite() {
        cost - eps
    } else {
        cost
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
}

/// `max cost . x` subject to `lower <= A x <= upper` and column bounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpModel {
    pub cost: Vec<f64>,
    pub col_lower: Vec<f64>,
    pub col_upper: Vec<f64>,
    pub rows: Vec<LpRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct Tableau {
    n: usize,
    m: usize,
    /// `m x ncols` row-major, `ncols == n`.
    t: Vec<f64>,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
    /// Position of each variable: `Ok(row)` if basic, `Err(col)` if nonbasic.
    pos: Vec<Result<usize, usize>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    value: Vec<f64>,
    /// Unperturbed objective, extended with zeros for row activities.
    cost: Vec<f64>,
    /// Perturbation added to each structural cost.
    shift: Vec<f64>,
    /// Perturbed reduced cost per nonbasic column.
    d: Vec<f64>,
    pub iterations: u64,
}

impl Tableau {
    pub fn new(model: &LpModel) -> Self {
        let n = model.cost.len();
        let m = model.rows.len();
        let mut t = vec![0.0; m * n];
        for (r, row) in model.rows.iter().enumerate() {
            for &(c, v) in &row.coeffs {
                t[r * n + c] += v;
            }
        }
        let mut lo = model.col_lower.clone();
        let mut hi = model.col_upper.clone();
        lo.extend(model.rows.iter().map(|r| r.lower));
        hi.extend(model.rows.iter().map(|r| r.upper));
        let d: Vec<f64> = (0..n)
            .map(|c| perturbed(c, model.cost[c], lo[c], hi[c]))
            .collect();
        let mut value = vec![0.0; n + m];
        for c in 0..n {
            value[c] = start_value(d[c], lo[c], hi[c]);
        }
        let mut cost = model.cost.clone();
        cost.extend(std::iter::repeat_n(0.0, m));
        let mut tab = Self {
            n,
            m,
            t,
            basic: (n..n + m).collect(),
            nonbasic: (0..n).collect(),
            pos: (0..n).map(Err).chain((0..m).map(Ok)).collect(),
            lo,
            hi,
            value,
            shift: (0..n).map(|c| d[c] - model.cost[c]).collect(),
            cost,
            d,
            iterations: 0,
        };
        tab.recompute_basic();
        tab
    }

    fn recompute_basic(&mut self) {
        for r in 0..self.m {
            let row = &self.t[r * self.n..(r + 1) * self.n];
            let v: f64 = row
                .iter()
                .zip(&self.nonbasic)
                .filter(|(a, _)| **a != 0.0)
                .map(|(a, &var)| a * self.value[var])
                .sum();
            self.value[self.basic[r]] = v;
        }
    }

    pub fn objective(&self) -> f64 {
        (0..self.n).map(|c| self.cost[c] * self.value[c]).sum()
    }

    /// Upper bound on the unperturbed optimum under the current bounds, valid
    /// once [`Tableau::solve`] returned `Optimal`. The smaller of two bounds:
    /// the objective plus the best gain each nonbasic column's exact reduced
    /// cost could reach within its box, and the perturbed optimum minus the
    /// least the perturbation can contribute over the column boxes.
    pub fn bound(&self) -> f64 {
        let mut by_reduced_cost = self.objective();
        for (c, &var) in self.nonbasic.iter().enumerate() {
            let mut dc = self.cost[var];
            for r in 0..self.m {
                let a = self.t[r * self.n + c];
                if a != 0.0 {
                    dc += self.cost[self.basic[r]] * a;
                }
            }
            let v = self.value[var];
            let gain = if dc > 0.0 {
                dc * (self.hi[var] - v)
            } else {
                dc * (self.lo[var] - v)
            };
            if gain > 0.0 {
                by_reduced_cost += gain;
            }
        }
        let mut by_perturbation = 0.0;
        for c in 0..self.n {
            let delta = self.shift[c];
            by_perturbation += (self.cost[c] + delta) * self.value[c];
            if delta != 0.0 {
                by_perturbation -= (delta * self.lo[c]).min(delta * self.hi[c]);
            }
        }
        by_reduced_cost.min(by_perturbation)
    }

    /// Values of the structural columns.
    pub fn values(&self) -> &[f64] {
        &self.value[..self.n]
    }

    /// Changes the bounds of structural column `col`. A nonbasic column
    /// moves to the bound its reduced cost requires, keeping dual feasibility.
    pub fn set_bounds(&mut self, col: usize, lower: f64, upper: f64) {
        let old_hi = self.hi[col];
        self.lo[col] = lower;
        self.hi[col] = upper;
        let Err(c) = self.pos[col] else { return };
        let old = self.value[col];
        let want_upper = if self.d[c] != 0.0 {
            self.d[c] > 0.0
        } else {
            old >= old_hi
        };
        let new = if want_upper && upper.is_finite() {
            upper
        } else if lower.is_finite() {
            lower
        } else if upper.is_finite() {
            upper
        } else {
            0.0
        };
        let delta = new - old;
        if delta != 0.0 {
            self.value[col] = new;
            for r in 0..self.m {
                let a = self.t[r * self.n + c];
                if a != 0.0 {
                    self.value[self.basic[r]] += a * delta;
                }
            }
        }
    }

    fn infeasibility(&self, var: usize) -> f64 {
        let v = self.value[var];
        if v < self.lo[var] - PRIMAL_TOL {
            self.lo[var] - v
        } else if v > self.hi[var] + PRIMAL_TOL {
            v - self.hi[var]
        } else {
            0.0
        }
    }

    /// Runs dual simplex pivots until primal feasibility (optimal),
    /// proven infeasibility, or the iteration cap.
    pub fn solve(&mut self, max_iterations: u64) -> LpStatus {
        let bland_after = 10 * (self.n + self.m) as u64;
        let mut since_refresh = 0u32;
        let mut local = 0u64;
        loop {
            if local >= max_iterations {
                return LpStatus::IterationLimit;
            }
            let bland = local >= bland_after;
            let Some(r) = self.leaving_row(bland) else {
                // Confirm against freshly recomputed values before stopping.
                self.recompute_basic();
                since_refresh = 0;
                if (0..self.m).any(|r| self.infeasibility(self.basic[r]) > 0.0) {
                    continue;
                }
                return LpStatus::Optimal;
            };
            let var = self.basic[r];
            let v = self.value[var];
            let (target, increase) = if v < self.lo[var] {
                (self.lo[var], true)
            } else {
                (self.hi[var], false)
            };
            let Some(c) = self.entering_col(r, increase, bland) else {
                return LpStatus::Infeasible;
            };
            self.pivot(r, c, target);
            local += 1;
            self.iterations += 1;
            since_refresh += 1;
            if since_refresh >= 200 {
                self.recompute_basic();
                since_refresh = 0;
            }
        }
    }

    fn leaving_row(&self, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.m {
            let var = self.basic[r];
            let inf = self.infeasibility(var);
            if inf <= 0.0 {
                continue;
            }
            // Scale by bound magnitude so big-M rows do not dominate.
            let score = if bland {
                -(var as f64)
            } else {
                inf / (1.0 + self.lo[var].abs().min(self.hi[var].abs()).min(1e6))
            };
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((r, score));
            }
        }
        best.map(|(r, _)| r)
    }

    fn entering_col(&self, r: usize, increase: bool, bland: bool) -> Option<usize> {
        let row = &self.t[r * self.n..(r + 1) * self.n];
        let mut best: Option<(usize, f64, f64)> = None;
        for (c, &a) in row.iter().enumerate() {
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let var = self.nonbasic[c];
            let val = self.value[var];
            let can_up = val < self.hi[var] - PRIMAL_TOL;
            let can_down = val > self.lo[var] + PRIMAL_TOL;
            let ok = if increase {
                (a > 0.0 && can_up) || (a < 0.0 && can_down)
            } else {
                (a < 0.0 && can_up) || (a > 0.0 && can_down)
            };
            if !ok {
                continue;
            }
            let ratio = self.d[c].abs() / a.abs();
            let better = match best {
                None => true,
                Some((bc, br, ba)) => {
                    if bland {
                        ratio < br - 1e-12 || (ratio <= br + 1e-12 && var < self.nonbasic[bc])
                    } else {
                        ratio < br - 1e-12 || (ratio <= br + 1e-12 && a.abs() > ba)
                    }
                }
            };
            if better {
                best = Some((c, ratio, a.abs()));
            }
        }
        best.map(|(c, _, _)| c)
    }

    fn pivot(&mut self, r: usize, c: usize, target: f64) {
        let n = self.n;
        let leaving = self.basic[r];
        let entering = self.nonbasic[c];
        let p = self.t[r * n + c];

        // Move the entering variable so the leaving one lands on `target`.
        let step = (target - self.value[leaving]) / p;
        self.value[entering] += step;
        for i in 0..self.m {
            let a = self.t[i * n + c];
            if a != 0.0 {
                self.value[self.basic[i]] += a * step;
            }
        }
        self.value[leaving] = target;

        // New pivot row: entering = (leaving - sum_{k != c} a_rk nb_k) / p.
        let inv = 1.0 / p;
        let mut nz = Vec::with_capacity(n);
        for k in 0..n {
            let idx = r * n + k;
            if k == c {
                self.t[idx] = inv;
            } else if self.t[idx] != 0.0 {
                self.t[idx] *= -inv;
                nz.push(k);
            }
        }
        let prow: Vec<(usize, f64)> = nz.iter().map(|&k| (k, self.t[r * n + k])).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let a = self.t[i * n + c];
            if a == 0.0 {
                continue;
            }
            let base = i * n;
            for &(k, v) in &prow {
                let cell = &mut self.t[base + k];
                *cell += a * v;
                if cell.abs() < DROP_TOL {
                    *cell = 0.0;
                }
            }
            self.t[base + c] = a * inv;
        }
        let dc = self.d[c];
        if dc != 0.0 {
            for &(k, v) in &prow {
                self.d[k] += dc * v;
                if self.d[k].abs() < DROP_TOL {
                    self.d[k] = 0.0;
                }
            }
        }
        self.d[c] = dc * inv;

        self.basic[r] = entering;
        self.nonbasic[c] = leaving;
        self.pos[entering] = Ok(r);
        self.pos[leaving] = Err(c);
    }
}

fn start_value(cost: f64, lo: f64, hi: f64) -> f64 {
    if cost > 0.0 && hi.is_finite() {
        hi
    } else if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}
