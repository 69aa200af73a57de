//! The utilization-maximizing allocation program with fairness-loss and
//! adjustment budgets, built from a cluster snapshot.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};

use crate::drf;
use crate::model::{
    total_capacity, validate_apps, AllocationMatrix, AppId, ApplicationSpec, ClusterSpec,
    Rational,
};

use super::{OptimizerError, Theta};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Integer,
    Continuous,
    Binary,
}

/// What a variable stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    /// Containers of app `i` on slave `j`.
    Containers { app: usize, slave: usize },
    /// Fairness loss of app `i`.
    Loss { app: usize },
    /// Adjustment indicator of carryover app `i`.
    Adjusted { app: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub role: VarRole,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    /// Coefficient in the maximized objective.
    pub objective: f64,
}

/// Which family of constraints a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowFamily {
    /// Per-slave, per-resource capacity.
    Capacity { slave: usize, resource: usize },
    MaxContainers { app: usize },
    MinContainers { app: usize },
    /// `l_i >= d_ik n_i / C_k - hat s_i` for one resource `k`.
    LossAbove { app: usize, resource: usize },
    /// `l_i >= hat s_i - d_iK n_i / C_K` on the dominant resource.
    LossBelow { app: usize },
    /// `M r_i >= x'_ij - x_ij`.
    ShrinkIndicator { app: usize, slave: usize },
    /// `M r_i >= x_ij - x'_ij`.
    GrowIndicator { app: usize, slave: usize },
    FairnessBudget,
    AdjustmentBudget,
}

/// `lower <= sum coeffs * vars <= upper`; infinite sides are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub family: RowFamily,
    pub coeffs: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
}

/// How the fairness-loss budget is derived from `theta1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FairnessBudgetMode {
    /// `ceil(theta1 * 2m)`.
    #[default]
    Ceiling,
    /// `theta1 * 2m` without rounding.
    Continuous,
}

/// One allocation instance.
#[derive(Debug, Clone)]
pub struct MilpProblem {
    pub apps: Vec<ApplicationSpec>,
    pub cluster: ClusterSpec,
    /// Previous allocation restricted to `apps`.
    pub prev: AllocationMatrix,
    /// Theoretical DRF share per app, aligned with `apps`.
    pub theoretical: Vec<Rational>,
    /// Precomputed dominant resource per app.
    pub dominant: Vec<usize>,
    /// Whether each app held containers in `prev`.
    pub carryover: Vec<bool>,
    pub theta1: Theta,
    pub theta2: Theta,
    pub fairness_budget: Rational,
    pub adjustment_budget: u64,
    pub big_m: u64,
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
    x_cols: Vec<Vec<usize>>,
    l_cols: Vec<usize>,
    r_cols: Vec<Option<usize>>,
}

fn to_f64(r: &Rational) -> f64 {
    r.to_f64().expect("finite rational")
}

fn ceil_int(r: &Rational) -> BigInt {
    let (q, rem) = r.numer().div_rem(r.denom());
    if rem > BigInt::zero() {
        q + 1
    } else {
        q
    }
}

/// Fairness-loss budget over `m` resources and adjustment budget over
/// `carryover` applications.
pub fn budgets(
    theta1: &Theta,
    theta2: &Theta,
    m: usize,
    carryover: usize,
    mode: FairnessBudgetMode,
) -> (Rational, u64) {
    let two_m = Rational::from_integer(BigInt::from(2 * m));
    let fairness = match mode {
        FairnessBudgetMode::Ceiling => {
            Rational::from_integer(ceil_int(&(theta1.value().clone() * &two_m)))
        }
        FairnessBudgetMode::Continuous => theta1.value().clone() * &two_m,
    };
    let adjustment = ceil_int(&(theta2.value().clone() * BigInt::from(carryover)))
        .to_u64()
        .expect("budget fits");
    (fairness, adjustment)
}

/// Builds the program for the running set `apps` given the previous
/// allocation and each app's theoretical share.
pub fn build_problem(
    apps: &[ApplicationSpec],
    cluster: &ClusterSpec,
    prev: &AllocationMatrix,
    theoretical: &BTreeMap<AppId, Rational>,
    theta1: Theta,
    theta2: Theta,
    mode: FairnessBudgetMode,
) -> Result<MilpProblem, OptimizerError> {
    if apps.is_empty() {
        return Err(OptimizerError::NoApplications);
    }
    let m = cluster.num_resources();
    validate_apps(apps, m)?;
    let totals = total_capacity(cluster);
    let slaves = cluster.slaves();
    let b = slaves.len();

    let prev = prev.restricted(|a| apps.iter().any(|s| &s.id == a));
    prev.check_capacity(cluster, apps)?;
    let held = prev.apps();
    let carryover: Vec<bool> = apps.iter().map(|a| held.contains(&a.id)).collect();
    let n_carry = carryover.iter().filter(|&&c| c).count();

    let dominant: Vec<usize> = apps
        .iter()
        .map(|a| drf::dominant_resource(&a.demand, &totals).expect("validated demand"))
        .collect();
    let hat: Vec<Rational> = apps
        .iter()
        .map(|a| {
            theoretical
                .get(&a.id)
                .cloned()
                .ok_or_else(|| OptimizerError::MissingShare(a.id.clone()))
        })
        .collect::<Result<_, _>>()?;

    let (fairness_budget, adjustment_budget) = budgets(&theta1, &theta2, m, n_carry, mode);
    let big_m = apps.iter().map(|a| u64::from(a.n_max)).max().unwrap_or(0) + 1;

    // share of aggregate resource k taken by one container of app i
    let unit = |i: usize, k: usize| -> Rational {
        Rational::new(
            BigInt::from(apps[i].demand.get(k)),
            BigInt::from(totals.get(k)),
        )
    };

    let mut columns = Vec::new();
    let mut x_cols = vec![Vec::with_capacity(b); apps.len()];
    for (i, a) in apps.iter().enumerate() {
        let gain: Rational = (0..m).fold(Rational::zero(), |acc, k| acc + unit(i, k));
        let gain = to_f64(&gain);
        for (j, s) in slaves.iter().enumerate() {
            // Tightest integral bound implied by n_max and this slave's capacity.
            let fit = (0..m)
                .filter(|&k| a.demand.get(k) > 0)
                .map(|k| s.capacity.get(k) / a.demand.get(k))
                .min()
                .unwrap_or(u64::MAX)
                .min(u64::from(a.n_max));
            x_cols[i].push(columns.len());
            columns.push(Column {
                name: format!("x[{},{}]", a.id, s.id),
                role: VarRole::Containers { app: i, slave: j },
                kind: VarKind::Integer,
                lower: 0.0,
                upper: fit as f64,
                objective: gain,
            });
        }
    }
    let mut l_cols = Vec::with_capacity(apps.len());
    for (i, a) in apps.iter().enumerate() {
        l_cols.push(columns.len());
        columns.push(Column {
            name: format!("l[{}]", a.id),
            role: VarRole::Loss { app: i },
            kind: VarKind::Continuous,
            lower: 0.0,
            upper: f64::INFINITY,
            objective: 0.0,
        });
    }
    let mut r_cols = vec![None; apps.len()];
    for (i, a) in apps.iter().enumerate() {
        if carryover[i] {
            r_cols[i] = Some(columns.len());
            columns.push(Column {
                name: format!("r[{}]", a.id),
                role: VarRole::Adjusted { app: i },
                kind: VarKind::Binary,
                lower: 0.0,
                upper: 1.0,
                objective: 0.0,
            });
        }
    }

    let inf = f64::INFINITY;
    let mut rows = Vec::new();

    for (j, s) in slaves.iter().enumerate() {
        for k in 0..m {
            let cap = s.capacity.get(k);
            // Normalize by capacity where possible so coefficients stay O(1).
            let scale = if cap > 0 { cap as f64 } else { 1000.0 };
            let coeffs: Vec<(usize, f64)> = apps
                .iter()
                .enumerate()
                .filter(|(_, a)| a.demand.get(k) > 0)
                .map(|(i, a)| (x_cols[i][j], a.demand.get(k) as f64 / scale))
                .collect();
            rows.push(Row {
                name: format!("cap[{},{}]", s.id, cluster.resource_names()[k]),
                family: RowFamily::Capacity {
                    slave: j,
                    resource: k,
                },
                coeffs,
                lower: -inf,
                upper: cap as f64 / scale,
            });
        }
    }
    for (i, a) in apps.iter().enumerate() {
        let coeffs: Vec<(usize, f64)> = x_cols[i].iter().map(|&c| (c, 1.0)).collect();
        rows.push(Row {
            name: format!("nmax[{}]", a.id),
            family: RowFamily::MaxContainers { app: i },
            coeffs: coeffs.clone(),
            lower: -inf,
            upper: f64::from(a.n_max),
        });
        rows.push(Row {
            name: format!("nmin[{}]", a.id),
            family: RowFamily::MinContainers { app: i },
            coeffs,
            lower: f64::from(a.n_min),
            upper: inf,
        });
    }
    for (i, a) in apps.iter().enumerate() {
        let hat_f = to_f64(&hat[i]);
        for k in 0..m {
            let u = to_f64(&unit(i, k));
            let mut coeffs = vec![(l_cols[i], 1.0)];
            if u != 0.0 {
                coeffs.extend(x_cols[i].iter().map(|&c| (c, -u)));
            }
            rows.push(Row {
                name: format!("loss_above[{},{}]", a.id, cluster.resource_names()[k]),
                family: RowFamily::LossAbove {
                    app: i,
                    resource: k,
                },
                coeffs,
                lower: -hat_f,
                upper: inf,
            });
        }
        let u = to_f64(&unit(i, dominant[i]));
        let mut coeffs = vec![(l_cols[i], 1.0)];
        coeffs.extend(x_cols[i].iter().map(|&c| (c, u)));
        rows.push(Row {
            name: format!("loss_below[{}]", a.id),
            family: RowFamily::LossBelow { app: i },
            coeffs,
            lower: hat_f,
            upper: inf,
        });
    }
    let big = big_m as f64;
    for (i, a) in apps.iter().enumerate() {
        let Some(rc) = r_cols[i] else { continue };
        for (j, s) in slaves.iter().enumerate() {
            let p = prev.get(&a.id, &s.id) as f64;
            let x = x_cols[i][j];
            rows.push(Row {
                name: format!("shrink[{},{}]", a.id, s.id),
                family: RowFamily::ShrinkIndicator { app: i, slave: j },
                coeffs: vec![(rc, big), (x, 1.0)],
                lower: p,
                upper: inf,
            });
            rows.push(Row {
                name: format!("grow[{},{}]", a.id, s.id),
                family: RowFamily::GrowIndicator { app: i, slave: j },
                coeffs: vec![(rc, big), (x, -1.0)],
                lower: -p,
                upper: inf,
            });
        }
    }
    rows.push(Row {
        name: "fairness_budget".into(),
        family: RowFamily::FairnessBudget,
        coeffs: l_cols.iter().map(|&c| (c, 1.0)).collect(),
        lower: -inf,
        upper: to_f64(&fairness_budget),
    });
    if n_carry > 0 {
        rows.push(Row {
            name: "adjustment_budget".into(),
            family: RowFamily::AdjustmentBudget,
            coeffs: r_cols.iter().flatten().map(|&c| (c, 1.0)).collect(),
            lower: -inf,
            upper: adjustment_budget as f64,
        });
    }

    Ok(MilpProblem {
        apps: apps.to_vec(),
        cluster: cluster.clone(),
        prev,
        theoretical: hat,
        dominant,
        carryover,
        theta1,
        theta2,
        fairness_budget,
        adjustment_budget,
        big_m,
        columns,
        rows,
        x_cols,
        l_cols,
        r_cols,
    })
}

impl MilpProblem {
    pub fn num_apps(&self) -> usize {
        self.apps.len()
    }

    pub fn num_slaves(&self) -> usize {
        self.cluster.slaves().len()
    }

    pub fn num_carryover(&self) -> usize {
        self.carryover.iter().filter(|&&c| c).count()
    }

    pub fn x_col(&self, app: usize, slave: usize) -> usize {
        self.x_cols[app][slave]
    }

    pub fn l_col(&self, app: usize) -> usize {
        self.l_cols[app]
    }

    pub fn r_col(&self, app: usize) -> Option<usize> {
        self.r_cols[app]
    }

    /// Previous container count of app `i` on slave `j`.
    pub fn prev_count(&self, app: usize, slave: usize) -> u64 {
        self.prev
            .get(&self.apps[app].id, &self.cluster.slaves()[slave].id)
    }

    /// Writes the instance in CPLEX LP text format for cross-checking with
    /// external solvers.
    pub fn to_lp_format(&self) -> String {
        let names: Vec<String> = self.columns.iter().map(|c| lp_name(&c.name)).collect();
        let mut out = String::new();
        let _ = writeln!(out, "\\ dormalloc allocation instance");
        let _ = writeln!(
            out,
            "\\ apps={} slaves={} theta1={} theta2={} M={}",
            self.num_apps(),
            self.num_slaves(),
            self.theta1,
            self.theta2,
            self.big_m
        );
        out.push_str("Maximize\n obj:");
        let mut first = true;
        for (c, col) in self.columns.iter().enumerate() {
            if col.objective != 0.0 {
                write_term(&mut out, col.objective, &names[c], &mut first);
            }
        }
        if first {
            out.push_str(" 0");
        }
        out.push_str("\nSubject To\n");
        for row in &self.rows {
            let body = |out: &mut String| {
                let mut first = true;
                for &(c, v) in &row.coeffs {
                    write_term(out, v, &names[c], &mut first);
                }
                if first {
                    out.push_str(" 0 ");
                    out.push_str(&names[0]);
                }
            };
            let name = lp_name(&row.name);
            if row.lower.is_finite() {
                let _ = write!(out, " {name}_lo:");
                body(&mut out);
                let _ = writeln!(out, " >= {}", fmt_num(row.lower));
            }
            if row.upper.is_finite() {
                let _ = write!(out, " {name}_up:");
                body(&mut out);
                let _ = writeln!(out, " <= {}", fmt_num(row.upper));
            }
        }
        out.push_str("Bounds\n");
        for (c, col) in self.columns.iter().enumerate() {
            if col.upper.is_finite() {
                let _ = writeln!(
                    out,
                    " {} <= {} <= {}",
                    fmt_num(col.lower),
                    names[c],
                    fmt_num(col.upper)
                );
            } else {
                let _ = writeln!(out, " {} >= {}", names[c], fmt_num(col.lower));
            }
        }
        out.push_str("General\n");
        for (c, col) in self.columns.iter().enumerate() {
            if col.kind == VarKind::Integer {
                let _ = writeln!(out, " {}", names[c]);
            }
        }
        out.push_str("Binary\n");
        for (c, col) in self.columns.iter().enumerate() {
            if col.kind == VarKind::Binary {
                let _ = writeln!(out, " {}", names[c]);
            }
        }
        out.push_str("End\n");
        out
    }
}

impl fmt::Display for MilpProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "allocation program: {} apps x {} slaves, {} columns, {} rows",
            self.num_apps(),
            self.num_slaves(),
            self.columns.len(),
            self.rows.len()
        )
    }
}

fn lp_name(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect::<String>()
        .trim_end_matches('_')
        .to_string()
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn write_term(out: &mut String, v: f64, name: &str, first: &mut bool) {
    if v < 0.0 {
        let _ = write!(out, " - {} {}", fmt_num(-v), name);
    } else if *first {
        let _ = write!(out, " {} {}", fmt_num(v), name);
    } else {
        let _ = write!(out, " + {} {}", fmt_num(v), name);
    }
    *first = false;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drf::{theoretical_shares, DrfMode};
    use crate::model::fixtures::{app, cluster};

    fn theta(s: &str) -> Theta {
        Theta::parse(s).unwrap()
    }

    fn build(
        apps: &[ApplicationSpec],
        c: &ClusterSpec,
        prev: &AllocationMatrix,
        t1: &str,
        t2: &str,
    ) -> MilpProblem {
        let hat = theoretical_shares(apps, c, DrfMode::Weighted);
        build_problem(
            apps,
            c,
            prev,
            &hat,
            theta(t1),
            theta(t2),
            FairnessBudgetMode::Ceiling,
        )
        .unwrap()
    }

    fn count(p: &MilpProblem, pred: impl Fn(&RowFamily) -> bool) -> usize {
        p.rows.iter().filter(|r| pred(&r.family)).count()
    }

    #[test]
    fn cold_start_has_no_adjustment_rows() {
        let c = cluster(&[&[4, 1, 16], &[4, 1, 16]]);
        let apps = [app("A", &[2, 0, 8], 1, 1, 5)];
        let p = build(&apps, &c, &AllocationMatrix::new(), "0.1", "0.1");
        assert_eq!(p.num_carryover(), 0);
        assert!(p.columns.iter().all(|c| c.kind != VarKind::Binary));
        assert_eq!(
            count(&p, |f| matches!(
                f,
                RowFamily::ShrinkIndicator { .. }
                    | RowFamily::GrowIndicator { .. }
                    | RowFamily::AdjustmentBudget
            )),
            0
        );
        assert_eq!(count(&p, |f| matches!(f, RowFamily::Capacity { .. })), 6);
        assert_eq!(count(&p, |f| matches!(f, RowFamily::LossAbove { .. })), 3);
        assert_eq!(count(&p, |f| matches!(f, RowFamily::LossBelow { .. })), 1);
    }

    #[test]
    fn budgets_are_literal_ceilings() {
        let c = cluster(&[&[8, 1, 32]]);
        let apps = [app("A", &[1, 0, 4], 1, 1, 5), app("B", &[1, 0, 4], 1, 1, 5)];
        let mut prev = AllocationMatrix::new();
        prev.set("A".into(), "s1".into(), 1);
        let p = build(&apps, &c, &prev, "0.1", "0");
        // ceil(0.1 * 6) = 1, ceil(0 * 1) = 0
        assert_eq!(p.fairness_budget, Rational::from_integer(1.into()));
        assert_eq!(p.adjustment_budget, 0);
        assert_eq!(p.num_carryover(), 1);
        let p = build(&apps, &c, &prev, "0.2", "0.1");
        assert_eq!(p.fairness_budget, Rational::from_integer(2.into()));
        assert_eq!(p.adjustment_budget, 1);
        assert_eq!(p.big_m, 6);
    }

    #[test]
    fn ceiling_uses_exact_decimal_theta() {
        // 0.1 * 30 is exactly 3; float arithmetic would round up to 4.
        let c = cluster(&[&[100, 1, 400]]);
        let apps: Vec<_> = (0..30)
            .map(|i| app(&format!("a{i}"), &[1, 0, 1], 1, 1, 2))
            .collect();
        let mut prev = AllocationMatrix::new();
        for a in &apps {
            prev.set(a.id.clone(), "s1".into(), 1);
        }
        let p = build(&apps, &c, &prev, "0.1", "0.1");
        assert_eq!(p.adjustment_budget, 3);
    }

    #[test]
    fn continuous_budget_mode() {
        let c = cluster(&[&[8, 1, 32]]);
        let apps = [app("A", &[1, 0, 4], 1, 1, 5)];
        let hat = theoretical_shares(&apps, &c, DrfMode::Weighted);
        let p = build_problem(
            &apps,
            &c,
            &AllocationMatrix::new(),
            &hat,
            theta("0.1"),
            theta("0.1"),
            FairnessBudgetMode::Continuous,
        )
        .unwrap();
        assert_eq!(p.fairness_budget, Rational::new(3.into(), 5.into()));
    }

    #[test]
    fn rejects_empty_app_set() {
        let c = cluster(&[&[8, 1, 32]]);
        let err = build_problem(
            &[],
            &c,
            &AllocationMatrix::new(),
            &BTreeMap::new(),
            theta("0.1"),
            theta("0.1"),
            FairnessBudgetMode::Ceiling,
        )
        .unwrap_err();
        assert_eq!(err, OptimizerError::NoApplications);
    }

    #[test]
    fn lp_export_mentions_every_family() {
        let c = cluster(&[&[8, 1, 32]]);
        let apps = [app("A", &[1, 0, 4], 1, 1, 5), app("B", &[1, 1, 4], 2, 1, 5)];
        let mut prev = AllocationMatrix::new();
        prev.set("A".into(), "s1".into(), 2);
        let p = build(&apps, &c, &prev, "0.2", "0.1");
        let lp = p.to_lp_format();
        for needle in [
            "Maximize",
            "Subject To",
            "cap_s1_cpu_up:",
            "nmin_A_lo:",
            "loss_below_B_lo:",
            "shrink_A_s1_lo:",
            "fairness_budget_up:",
            "adjustment_budget_up:",
            "General",
            "Binary\n r_A",
            "End",
        ] {
            assert!(lp.contains(needle), "missing {needle}\n{lp}");
        }
    }
}
