//! Sampling designs: classical and steady-state E-optimal, myopic, naive,
//! plus the canonical second-order cone form of the steady-state problem.
//!
//! The steady-state problem maximizes `θ` subject to the hyperbolic rows
//! `θ² ≤ (Jξ)_i (θ + 1/σ_i²)` and the budget system. For a fixed `θ` each
//! hyperbolic row is the linear row `(Jξ)_i ≥ θ² / (θ + 1/σ_i²)`, and the
//! right-hand side grows with `θ`, so the feasible `θ` form an interval
//! `[0, θ*]`. The solver bisects on `θ` with a phase-1 feasibility probe per
//! step. The returned witness is one optimizer among possibly many; which
//! one is fixed by the simplex pivoting order.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::filtering::{predicted_info, required_info, steady_state_info_unchecked};
use crate::lp::{check_feasible, solve_lp, Bound, Constraints, Feasibility, LinearProgram, LpStatus};
use crate::model::{validate_problem, DesignProblem, DesignVector, FlowModel, FEASIBILITY_TOL};

pub const DEFAULT_TOL_THETA: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    ClassicalE,
    SteadyStateE,
    Myopic,
    Naive,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::ClassicalE => "classical",
            Scheme::SteadyStateE => "steady_state",
            Scheme::Myopic => "myopic",
            Scheme::Naive => "naive",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub lp_solves: usize,
    pub pivots: usize,
    pub bisection_steps: usize,
    /// Final width of the bisection bracket.
    pub theta_gap: f64,
    /// Most negative hyperbolic slack at the returned point (0 if none).
    pub min_slack: f64,
    pub perturbed: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub xi: DesignVector,
    /// Minimum over flows of the information the scheme targets, evaluated
    /// at `xi`.
    pub theta: f64,
    pub scheme: Scheme,
    pub diagnostics: Diagnostics,
}

/// Minimum steady-state information over flows for design `xi`.
pub fn steady_state_objective(p: &DesignProblem, fm: &FlowModel, xi: &[f64]) -> f64 {
    p.information(xi)
        .iter()
        .zip(fm.sigma2())
        .map(|(&m, &s2)| steady_state_info_unchecked(m.max(0.0), s2))
        .fold(f64::INFINITY, f64::min)
}

/// Maximize the smallest per-flow information `min_i (Jξ)_i`.
pub fn solve_classical_e(p: &DesignProblem) -> Result<DesignResult> {
    let offsets = vec![0.0; p.n_flows()];
    let mut res = maximin_lp(p, &offsets)?;
    res.scheme = Scheme::ClassicalE;
    Ok(res)
}

/// One-period design maximizing `min_i (a_i + (Jξ)_i)`, where `a` is the
/// prior information, pushed through the prediction step when
/// `use_prediction` is set.
pub fn solve_myopic(
    p: &DesignProblem,
    fm: &FlowModel,
    prior_info: &[f64],
    use_prediction: bool,
) -> Result<DesignResult> {
    if prior_info.len() != p.n_flows() {
        return Err(Error::DimensionMismatch {
            what: "prior information",
            expected: p.n_flows(),
            got: prior_info.len(),
        });
    }
    if fm.n_flows() != p.n_flows() {
        return Err(Error::DimensionMismatch {
            what: "flow model",
            expected: p.n_flows(),
            got: fm.n_flows(),
        });
    }
    if let Some(i) = prior_info.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::invalid(format!("prior_info[{i}]"), "must be nonnegative"));
    }
    let offsets: Vec<f64> = if use_prediction {
        prior_info
            .iter()
            .zip(fm.sigma2())
            .map(|(&info, &s2)| predicted_info(info, s2))
            .collect()
    } else {
        prior_info.to_vec()
    };
    let mut res = maximin_lp(p, &offsets)?;
    res.scheme = Scheme::Myopic;
    Ok(res)
}

/// Equal rate on every traversed interface of each router, exhausting the
/// router's budget. `traversal[j][k]` marks interface `k` of budget row `j`
/// as carrying at least one tracked flow.
pub fn solve_naive(p: &DesignProblem, traversal: &[Vec<bool>]) -> Result<DesignResult> {
    let n_o = p.n_design();
    if traversal.len() != p.n_budgets() {
        return Err(Error::DimensionMismatch {
            what: "traversal rows",
            expected: p.n_budgets(),
            got: traversal.len(),
        });
    }
    for k in 0..n_o {
        let owners = (0..p.n_budgets()).filter(|&j| p.r[(j, k)] != 0.0).count();
        if owners > 1 {
            return Err(Error::invalid(
                format!("R column {}", k + 1),
                "naive allocation needs each observation point in exactly one budget row",
            ));
        }
    }
    let mut xi = vec![0.0; n_o];
    for (j, row) in traversal.iter().enumerate() {
        if row.len() != n_o {
            return Err(Error::DimensionMismatch {
                what: "traversal columns",
                expected: n_o,
                got: row.len(),
            });
        }
        let weight: f64 = (0..n_o).filter(|&k| row[k]).map(|k| p.r[(j, k)]).sum();
        if weight <= 0.0 {
            continue;
        }
        let rate = p.b[j] / weight;
        for k in (0..n_o).filter(|&k| row[k] && p.r[(j, k)] != 0.0) {
            xi[k] = p.upper[k].map_or(rate, |u| rate.min(u)).max(p.lower[k]);
        }
    }
    let theta = p.information(&xi).into_iter().fold(f64::INFINITY, f64::min);
    Ok(DesignResult {
        xi: DesignVector::new(xi),
        theta,
        scheme: Scheme::Naive,
        diagnostics: Diagnostics::default(),
    })
}

/// Maximize the minimum steady-state information by bisection on `θ`.
pub fn solve_steady_state_e(p: &DesignProblem, fm: &FlowModel, tol_theta: f64) -> Result<DesignResult> {
    if !(tol_theta > 0.0) {
        return Err(Error::invalid("tol_theta", "must be positive"));
    }
    let report = validate_problem(p, fm)?;
    let mut diag = Diagnostics {
        warnings: report.warnings(),
        ..Default::default()
    };
    for w in &diag.warnings {
        log::warn!("{w}");
    }

    let base = design_constraints(p, 0);
    let mut witness = match check_feasible(&base)? {
        Feasibility::Feasible(x) => x,
        Feasibility::Infeasible => {
            return Err(Error::Infeasible("budget constraints admit no design".into()))
        }
    };
    diag.lp_solves += 1;

    if !report.is_clean() {
        return finish_steady_state(p, fm, witness, diag);
    }

    let row_scale: Vec<f64> = (0..p.n_flows())
        .map(|i| p.j.row(i).iter().fold(0.0_f64, |a, v| a.max(*v)))
        .collect();
    let probe = |theta: f64, diag: &mut Diagnostics| -> Result<Option<Vec<f64>>> {
        let mut cons = base.clone();
        for i in 0..p.n_flows() {
            let need = required_info(theta, fm.sigma2()[i]);
            let row: Vec<f64> = p.j.row(i).iter().map(|v| v / row_scale[i]).collect();
            cons = cons.ge(row, need / row_scale[i]);
        }
        diag.lp_solves += 1;
        Ok(match check_feasible(&cons)? {
            Feasibility::Feasible(x) => Some(x),
            Feasibility::Infeasible => None,
        })
    };

    let mut lo = steady_state_objective(p, fm, &witness);
    let mut hi = theta_upper_bound(p, fm, &base, &mut diag)?;
    if let Some(x) = probe(hi, &mut diag)? {
        return finish_steady_state(p, fm, x, diag);
    }
    while hi - lo > tol_theta * hi {
        let mid = 0.5 * (lo + hi);
        diag.bisection_steps += 1;
        match probe(mid, &mut diag)? {
            Some(x) => {
                // The witness may overshoot the probe level.
                lo = steady_state_objective(p, fm, &x).max(mid);
                witness = x;
            }
            None => hi = mid,
        }
    }
    diag.theta_gap = hi - lo;
    finish_steady_state(p, fm, witness, diag)
}

fn finish_steady_state(
    p: &DesignProblem,
    fm: &FlowModel,
    xi: Vec<f64>,
    mut diag: Diagnostics,
) -> Result<DesignResult> {
    let mut xi = xi;
    snap_rates(p, &mut xi);
    check_design(p, &xi)?;
    let theta = steady_state_objective(p, fm, &xi);
    let m = p.information(&xi);
    diag.min_slack = m
        .iter()
        .zip(fm.sigma2())
        .map(|(&mi, &s2)| (mi * (theta + 1.0 / s2) - theta * theta) / (theta * theta).max(1.0))
        .fold(0.0, f64::min);
    if diag.min_slack < -FEASIBILITY_TOL {
        return Err(Error::Numerical(format!(
            "hyperbolic constraint violated at returned design (slack {})",
            diag.min_slack
        )));
    }
    Ok(DesignResult {
        xi: DesignVector::new(xi),
        theta,
        scheme: Scheme::SteadyStateE,
        diagnostics: diag,
    })
}

/// Upper end of the bisection bracket: with all variables at their caps,
/// no flow can exceed its steady-state information. Uncapped problems fall
/// back to per-flow information maximization.
fn theta_upper_bound(
    p: &DesignProblem,
    fm: &FlowModel,
    base: &Constraints,
    diag: &mut Diagnostics,
) -> Result<f64> {
    if p.upper.iter().all(Option::is_some) {
        let caps: Vec<f64> = p.upper.iter().map(|u| u.unwrap()).collect();
        return Ok(p
            .information(&caps)
            .iter()
            .zip(fm.sigma2())
            .map(|(&m, &s2)| steady_state_info_unchecked(m, s2))
            .fold(0.0, f64::max));
    }
    let mut bound = f64::INFINITY;
    for i in 0..p.n_flows() {
        let c: Vec<f64> = p.j.row(i).iter().copied().collect();
        let sol = solve_lp(&LinearProgram::new(c, base.clone()))?;
        diag.lp_solves += 1;
        diag.pivots += sol.iterations;
        match sol.status {
            LpStatus::Optimal => {
                bound = bound.min(steady_state_info_unchecked(sol.objective.max(0.0), fm.sigma2()[i]))
            }
            LpStatus::Unbounded => {
                return Err(Error::Unbounded(format!(
                    "information of flow {} is unbounded over the budget set",
                    i + 1
                )))
            }
            LpStatus::Infeasible => return Err(Error::Infeasible("budget constraints admit no design".into())),
            LpStatus::NumericalFailure => {
                return Err(Error::Numerical("bracketing LP failed".into()))
            }
        }
    }
    Ok(bound)
}

/// `maximize θ` s.t. `θ ≤ offset_i + (Jξ)_i` plus the budget system.
fn maximin_lp(p: &DesignProblem, offsets: &[f64]) -> Result<DesignResult> {
    let report = validate_problem_shape(p)?;
    let n_o = p.n_design();
    let row_scale: Vec<f64> = (0..p.n_flows())
        .map(|i| p.j.row(i).iter().fold(0.0_f64, |a, v| a.max(*v)))
        .collect();
    // The least informative rows bind, so θ is measured in their units.
    let theta_scale = row_scale
        .iter()
        .filter(|v| **v > 0.0)
        .fold(f64::INFINITY, |a, v| a.min(*v));
    let theta_scale = if theta_scale.is_finite() { theta_scale } else { 1.0 };

    let mut cons = design_constraints(p, 1);
    for i in 0..p.n_flows() {
        let r = if row_scale[i] > 0.0 { row_scale[i] } else { theta_scale };
        let mut row = Vec::with_capacity(n_o + 1);
        row.push(theta_scale / r);
        row.extend(p.j.row(i).iter().map(|v| -v / r));
        cons = cons.le(row, offsets[i] / r);
    }
    let mut c = vec![0.0; n_o + 1];
    c[0] = 1.0;
    let sol = solve_lp(&LinearProgram::new(c, cons))?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::Infeasible("budget constraints admit no design".into()))
        }
        LpStatus::Unbounded => {
            return Err(Error::Unbounded("maximin information is unbounded".into()))
        }
        LpStatus::NumericalFailure => {
            return Err(Error::Numerical("maximin LP failed re-substitution".into()))
        }
    }
    let mut xi = sol.x[1..].to_vec();
    snap_rates(p, &mut xi);
    check_design(p, &xi)?;
    let theta = p
        .information(&xi)
        .iter()
        .zip(offsets)
        .map(|(m, a)| m + a)
        .fold(f64::INFINITY, f64::min);
    Ok(DesignResult {
        xi: DesignVector::new(xi),
        theta,
        scheme: Scheme::Myopic,
        diagnostics: Diagnostics {
            lp_solves: 1,
            pivots: sol.iterations,
            perturbed: sol.perturbed,
            warnings: report,
            ..Default::default()
        },
    })
}

fn validate_problem_shape(p: &DesignProblem) -> Result<Vec<String>> {
    let fm = FlowModel::from_sigma2(vec![1.0; p.n_flows().max(1)])?;
    if p.n_flows() == 0 {
        return Err(Error::invalid("J", "at least one flow is required"));
    }
    Ok(validate_problem(p, &fm)?.warnings())
}

/// Bounds and budget rows over `(lead.., ξ)`; leading variables are `≥ 0`.
fn design_constraints(p: &DesignProblem, lead: usize) -> Constraints {
    let mut bounds = vec![Bound::NONNEG; lead];
    bounds.extend((0..p.n_design()).map(|k| Bound::new(p.lower[k], p.upper[k])));
    let mut cons = Constraints::new(bounds);
    for j in 0..p.n_budgets() {
        let mut row = vec![0.0; lead];
        row.extend(p.r.row(j).iter().copied());
        cons = if p.row_is_equality[j] {
            cons.eq(row, p.b[j])
        } else {
            cons.le(row, p.b[j])
        };
    }
    cons
}

/// Rates below this are simplex round-off, not a sampling decision.
pub const RATE_SNAP: f64 = 1e-12;

fn snap_rates(p: &DesignProblem, xi: &mut [f64]) {
    for (k, x) in xi.iter_mut().enumerate() {
        if *x < RATE_SNAP && p.lower[k] <= 0.0 {
            *x = p.lower[k].max(0.0);
        }
    }
}

/// Re-substitution check applied to every solver output.
fn check_design(p: &DesignProblem, xi: &[f64]) -> Result<()> {
    let v = p.max_violation(xi);
    if v > FEASIBILITY_TOL {
        return Err(Error::Numerical(format!("design violates constraints by {v}")));
    }
    if p.information(xi).iter().any(|m| *m < -FEASIBILITY_TOL) {
        return Err(Error::Numerical("negative information at returned design".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    /// `θ² ≤ (Jξ)_i (θ + 1/σ_i²)` in second-order cone form.
    Hyperbolic,
    /// `R_j ξ ≤ b_j` with `P = 0`.
    Budget,
    /// `R_j ξ = b_j`: the cone's right-hand side must vanish.
    BudgetEquality,
}

impl ConeKind {
    fn as_str(self) -> &'static str {
        match self {
            ConeKind::Hyperbolic => "hyperbolic",
            ConeKind::Budget => "budget",
            ConeKind::BudgetEquality => "budget_eq",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "hyperbolic" => Some(ConeKind::Hyperbolic),
            "budget" => Some(ConeKind::Budget),
            "budget_eq" => Some(ConeKind::BudgetEquality),
            _ => None,
        }
    }
}

/// `‖P x + q‖ ≤ r'x + s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocCone {
    pub kind: ConeKind,
    pub p: DMatrix<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub s: f64,
}

impl SocCone {
    /// `r'x + s − ‖P x + q‖`; nonnegative when the cone holds.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.s;
        let norm = (0..self.p.nrows())
            .map(|row| {
                let v: f64 = self.p.row(row).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.q[row];
                v * v
            })
            .sum::<f64>()
            .sqrt();
        lin - norm
    }
}

/// `minimize f'x` over the cones, with `x = (θ, ξ_1, …, ξ_{n_o})`.
///
/// Variable bounds on `ξ` are carried alongside the cones; `θ` is free.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalSocp {
    pub f: Vec<f64>,
    pub cones: Vec<SocCone>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

pub fn export_canonical_socp(p: &DesignProblem, fm: &FlowModel) -> Result<CanonicalSocp> {
    validate_problem(p, fm)?;
    let n = p.n_design() + 1;
    let mut f = vec![0.0; n];
    f[0] = -1.0;
    let mut cones = Vec::with_capacity(p.n_flows() + p.n_budgets());
    for i in 0..p.n_flows() {
        let inv = 1.0 / fm.sigma2()[i];
        let mut pm = DMatrix::zeros(2, n);
        pm[(0, 0)] = 2.0;
        pm[(1, 0)] = -1.0;
        let mut r = vec![0.0; n];
        r[0] = 1.0;
        for k in 0..p.n_design() {
            pm[(1, k + 1)] = p.j[(i, k)];
            r[k + 1] = p.j[(i, k)];
        }
        cones.push(SocCone {
            kind: ConeKind::Hyperbolic,
            p: pm,
            q: vec![0.0, -inv],
            r,
            s: inv,
        });
    }
    for j in 0..p.n_budgets() {
        let mut r = vec![0.0; n];
        for k in 0..p.n_design() {
            r[k + 1] = -p.r[(j, k)];
        }
        cones.push(SocCone {
            kind: if p.row_is_equality[j] {
                ConeKind::BudgetEquality
            } else {
                ConeKind::Budget
            },
            p: DMatrix::zeros(1, n),
            q: vec![0.0],
            r,
            s: p.b[j],
        });
    }
    let mut lower = vec![None];
    lower.extend(p.lower.iter().map(|v| Some(*v)));
    let mut upper = vec![None];
    upper.extend(p.upper.iter().copied());
    Ok(CanonicalSocp { f, cones, lower, upper })
}

impl CanonicalSocp {
    pub fn n_vars(&self) -> usize {
        self.f.len()
    }

    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.cones.iter().map(|c| c.residual(x)).collect()
    }

    /// Every cone, equality and bound holds within `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        let cones_ok = self.cones.iter().all(|c| {
            let res = c.residual(x);
            match c.kind {
                ConeKind::BudgetEquality => res.abs() <= tol,
                _ => res >= -tol,
            }
        });
        let bounds_ok = x.iter().enumerate().all(|(k, &v)| {
            self.lower[k].is_none_or(|l| v >= l - tol) && self.upper[k].is_none_or(|u| v <= u + tol)
        });
        cones_ok && bounds_ok
    }

    /// Plain-text block format: a header, the objective and bounds, then one
    /// stanza per cone (`cone`, `dims`, rows of `P`, `q`, `r`, `s`).
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let opt = |v: &[Option<f64>]| {
            v.iter()
                .map(|x| x.map_or_else(|| "none".to_string(), |x| x.to_string()))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut out = String::new();
        writeln!(out, "# flowdesign canonical socp v1").unwrap();
        writeln!(out, "# minimize f'x  s.t.  ||P_i x + q_i|| <= r_i'x + s_i; x = (theta, xi_1..xi_n)").unwrap();
        writeln!(out, "vars {}", self.n_vars()).unwrap();
        writeln!(out, "cones {}", self.cones.len()).unwrap();
        writeln!(out, "f {}", join(&self.f)).unwrap();
        writeln!(out, "lower {}", opt(&self.lower)).unwrap();
        writeln!(out, "upper {}", opt(&self.upper)).unwrap();
        for (idx, c) in self.cones.iter().enumerate() {
            writeln!(out).unwrap();
            writeln!(out, "cone {} {}", idx + 1, c.kind.as_str()).unwrap();
            writeln!(out, "dims {} {}", c.p.nrows(), c.p.ncols()).unwrap();
            for row in 0..c.p.nrows() {
                let vals: Vec<f64> = c.p.row(row).iter().copied().collect();
                writeln!(out, "P {}", join(&vals)).unwrap();
            }
            writeln!(out, "q {}", join(&c.q)).unwrap();
            writeln!(out, "r {}", join(&c.r)).unwrap();
            writeln!(out, "s {}", c.s).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, why: &str| Error::Io(format!("socp text line {line}: {why}"));
        let nums = |line: usize, toks: &[&str]| -> Result<Vec<f64>> {
            toks.iter()
                .map(|t| t.parse::<f64>().map_err(|_| bad(line, "expected a number")))
                .collect()
        };
        let opts = |line: usize, toks: &[&str]| -> Result<Vec<Option<f64>>> {
            toks.iter()
                .map(|t| match *t {
                    "none" => Ok(None),
                    t => t.parse::<f64>().map(Some).map_err(|_| bad(line, "expected a number")),
                })
                .collect()
        };
        let mut f = Vec::new();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut cones: Vec<SocCone> = Vec::new();
        let mut p_rows: Vec<Vec<f64>> = Vec::new();
        let mut dims = (0usize, 0usize);
        for (no, raw) in text.lines().enumerate() {
            let line = no + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = raw.split_whitespace().collect();
            match toks[0] {
                "vars" | "cones" => {}
                "f" => f = nums(line, &toks[1..])?,
                "lower" => lower = opts(line, &toks[1..])?,
                "upper" => upper = opts(line, &toks[1..])?,
                "cone" => {
                    let kind = toks
                        .get(2)
                        .and_then(|k| ConeKind::parse(k))
                        .ok_or_else(|| bad(line, "unknown cone kind"))?;
                    cones.push(SocCone {
                        kind,
                        p: DMatrix::zeros(0, 0),
                        q: Vec::new(),
                        r: Vec::new(),
                        s: 0.0,
                    });
                    p_rows.clear();
                }
                "dims" => {
                    let d = nums(line, &toks[1..])?;
                    if d.len() != 2 {
                        return Err(bad(line, "dims needs two values"));
                    }
                    dims = (d[0] as usize, d[1] as usize);
                }
                "P" => p_rows.push(nums(line, &toks[1..])?),
                "q" | "r" | "s" => {
                    let cone = cones.last_mut().ok_or_else(|| bad(line, "data before cone header"))?;
                    let v = nums(line, &toks[1..])?;
                    match toks[0] {
                        "q" => {
                            if p_rows.len() != dims.0 || p_rows.iter().any(|r| r.len() != dims.1) {
                                return Err(bad(line, "P does not match dims"));
                            }
                            cone.p = DMatrix::from_fn(dims.0, dims.1, |i, k| p_rows[i][k]);
                            cone.q = v;
                        }
                        "r" => cone.r = v,
                        _ => cone.s = *v.first().ok_or_else(|| bad(line, "missing s"))?,
                    }
                }
                _ => return Err(bad(line, "unknown keyword")),
            }
        }
        Ok(CanonicalSocp { f, cones, lower, upper })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtering::steady_state_info;
    use crate::model::dense;

    fn two_flow(j: &[&[f64]]) -> DesignProblem {
        DesignProblem::from_rows(j, &[&[1.0, 1.0]], &[1.0])
    }

    #[test]
    fn classical_worked_example() {
        let res = solve_classical_e(&two_flow(&[&[40.0, 10.0], &[10.0, 40.0]])).unwrap();
        assert!((res.xi.as_slice()[0] - 0.5).abs() < 1e-9);
        assert!((res.xi.as_slice()[1] - 0.5).abs() < 1e-9);
        assert!((res.theta - 25.0).abs() < 1e-9);
        assert_eq!(res.scheme, Scheme::ClassicalE);
    }

    #[test]
    fn classical_identity_and_asymmetric() {
        let res = solve_classical_e(&two_flow(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert!((res.theta - 0.5).abs() < 1e-12);
        // ξ1 = 2(1 - ξ1)
        let res = solve_classical_e(&two_flow(&[&[1.0, 0.0], &[0.0, 2.0]])).unwrap();
        assert!((res.theta - 2.0 / 3.0).abs() < 1e-12);
        assert!((res.xi.as_slice()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((res.xi.as_slice()[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn classical_infeasible_budget() {
        let p = DesignProblem::from_rows(&[&[1.0]], &[&[1.0]], &[0.5])
            .with_equalities(vec![true]);
        let mut p = p;
        p.upper = vec![Some(0.25)];
        assert!(matches!(solve_classical_e(&p), Err(Error::Infeasible(_))));
    }

    #[test]
    fn steady_state_asymmetric_example() {
        // Exact optimum: ssi(40ξ+10(1-ξ), 0.01) = ssi(10ξ+40(1-ξ), 0.04)
        // at ξ = 2/9, θ = 50; a step-1e-4 grid search gives 49.9988 at
        // (0.2222, 0.7778).
        let p = two_flow(&[&[40.0, 10.0], &[10.0, 40.0]]);
        let fm = FlowModel::from_sigma2(vec![0.01, 0.04]).unwrap();
        let res = solve_steady_state_e(&p, &fm, DEFAULT_TOL_THETA).unwrap();
        let xi = res.xi.as_slice();
        assert!(xi[0] < xi[1]);
        assert!((res.theta - 50.0).abs() < 1e-6, "theta {}", res.theta);
        assert!((xi[0] - 2.0 / 9.0).abs() < 1e-6 && (xi[1] - 7.0 / 9.0).abs() < 1e-6, "{xi:?}");
        assert!(res.diagnostics.min_slack >= -1e-8);
    }

    #[test]
    fn steady_state_symmetric_and_single_flow() {
        let p = two_flow(&[&[40.0, 10.0], &[10.0, 40.0]]);
        let fm = FlowModel::from_sigma2(vec![0.02, 0.02]).unwrap();
        let res = solve_steady_state_e(&p, &fm, DEFAULT_TOL_THETA).unwrap();
        assert!((res.xi.as_slice()[0] - 0.5).abs() < 1e-6);

        let p = DesignProblem::from_rows(&[&[1.0]], &[&[1.0]], &[1.0]);
        let fm = FlowModel::from_sigma2(vec![1.0]).unwrap();
        let res = solve_steady_state_e(&p, &fm, DEFAULT_TOL_THETA).unwrap();
        assert!((res.xi.as_slice()[0] - 1.0).abs() < 1e-12);
        assert!((res.theta - steady_state_info(1.0, 1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn steady_state_unobservable_flow() {
        let p = two_flow(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let fm = FlowModel::from_sigma2(vec![1.0, 1.0]).unwrap();
        let res = solve_steady_state_e(&p, &fm, DEFAULT_TOL_THETA).unwrap();
        assert_eq!(res.theta, 0.0);
        assert_eq!(res.diagnostics.warnings.len(), 1);
    }

    #[test]
    fn steady_state_uncapped_bracket() {
        let p = two_flow(&[&[40.0, 10.0], &[10.0, 40.0]]).without_caps();
        let fm = FlowModel::from_sigma2(vec![0.01, 0.04]).unwrap();
        let res = solve_steady_state_e(&p, &fm, DEFAULT_TOL_THETA).unwrap();
        assert!((res.theta - 50.0).abs() < 1e-6);
        // No budget at all: information is unbounded.
        let p = DesignProblem::new(dense(&[&[1.0]]), DMatrix::zeros(0, 1), vec![]).without_caps();
        let fm = FlowModel::from_sigma2(vec![1.0]).unwrap();
        assert!(matches!(
            solve_steady_state_e(&p, &fm, DEFAULT_TOL_THETA),
            Err(Error::Unbounded(_))
        ));
    }

    #[test]
    fn myopic_reduces_to_classical_with_zero_prior() {
        let p = two_flow(&[&[40.0, 10.0], &[10.0, 40.0]]);
        let fm = FlowModel::from_sigma2(vec![0.01, 0.04]).unwrap();
        let my = solve_myopic(&p, &fm, &[0.0, 0.0], true).unwrap();
        let cl = solve_classical_e(&p).unwrap();
        assert!((my.theta - cl.theta).abs() < 1e-12);
        assert_eq!(my.xi, cl.xi);
    }

    #[test]
    fn myopic_with_prior_information() {
        // a = (100/101, 0); ξ2 − ξ1 = 100/101, ξ1 + ξ2 = 1
        let p = two_flow(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let fm = FlowModel::from_sigma2(vec![1.0, 1.0]).unwrap();
        let res = solve_myopic(&p, &fm, &[100.0, 0.0], true).unwrap();
        let a1 = 100.0 / 101.0;
        let xi1 = (1.0 - a1) / 2.0;
        assert!((res.xi.as_slice()[0] - xi1).abs() < 1e-12);
        assert!((res.xi.as_slice()[1] - (1.0 - xi1)).abs() < 1e-12);
        assert!((res.xi.as_slice()[0] - 0.00495).abs() < 1e-5);
        // Without prediction the raw prior already exceeds the whole budget.
        let res = solve_myopic(&p, &fm, &[100.0, 0.0], false).unwrap();
        assert!((res.xi.as_slice()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn myopic_errors() {
        let p = two_flow(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let fm = FlowModel::from_sigma2(vec![1.0, 1.0]).unwrap();
        assert!(solve_myopic(&p, &fm, &[-1.0, 0.0], true).is_err());
        assert!(solve_myopic(&p, &fm, &[0.0], true).is_err());
        let mut bad = p.clone().with_equalities(vec![true]);
        bad.b = vec![3.0];
        assert!(matches!(solve_myopic(&bad, &fm, &[0.0, 0.0], true), Err(Error::Infeasible(_))));
    }

    #[test]
    fn naive_allocations() {
        let j = DMatrix::from_element(1, 5, 1.0);
        let r = DMatrix::from_element(1, 5, 1.0);
        let p = DesignProblem::new(j, r, vec![0.01]);
        let res = solve_naive(&p, &[vec![true, true, true, true, false]]).unwrap();
        assert_eq!(res.xi.as_slice(), &[0.0025, 0.0025, 0.0025, 0.0025, 0.0]);
        let res = solve_naive(&p, &[vec![false, false, true, false, false]]).unwrap();
        assert_eq!(res.xi.as_slice(), &[0.0, 0.0, 0.01, 0.0, 0.0]);
        let res = solve_naive(&p, &[vec![false; 5]]).unwrap();
        assert_eq!(res.xi.as_slice(), &[0.0; 5]);
    }

    #[test]
    fn canonical_blocks() {
        let p = two_flow(&[&[40.0, 10.0], &[10.0, 40.0]]);
        let fm = FlowModel::from_sigma2(vec![0.01, 0.04]).unwrap();
        let socp = export_canonical_socp(&p, &fm).unwrap();
        assert_eq!(socp.cones.len(), 3);
        assert_eq!(socp.f, vec![-1.0, 0.0, 0.0]);
        let c1 = &socp.cones[0];
        assert_eq!(c1.p, dense(&[&[2.0, 0.0, 0.0], &[-1.0, 40.0, 10.0]]));
        assert_eq!(c1.q, vec![0.0, -100.0]);
        assert_eq!(c1.r, vec![1.0, 40.0, 10.0]);
        assert_eq!(c1.s, 100.0);
        let c3 = &socp.cones[2];
        assert_eq!(c3.kind, ConeKind::Budget);
        assert!(c3.p.iter().all(|v| *v == 0.0));
        assert_eq!(c3.r, vec![0.0, -1.0, -1.0]);
        assert_eq!(c3.s, 1.0);
    }

    #[test]
    fn hyperbolic_boundary_identity() {
        // w = 0, x = y: ‖(0, 0)‖ ≤ 2x
        let cone = SocCone {
            kind: ConeKind::Hyperbolic,
            p: dense(&[&[2.0, 0.0], &[0.0, 0.0]]),
            q: vec![0.0, 0.0],
            r: vec![0.0, 2.0],
            s: 0.0,
        };
        assert!(cone.residual(&[0.0, 3.0]) >= 0.0);
        assert!(cone.residual(&[0.0, 0.0]) >= 0.0);
        assert!(cone.residual(&[0.0, -1.0]) < 0.0);
    }

    #[test]
    fn socp_text_round_trip() {
        let p = two_flow(&[&[40.0, 10.0], &[10.0, 40.0]]).with_equalities(vec![true]);
        let fm = FlowModel::from_sigma2(vec![0.01, 0.04]).unwrap();
        let socp = export_canonical_socp(&p, &fm).unwrap();
        let text = socp.to_text();
        assert!(text.contains("cone 3 budget_eq"));
        assert_eq!(CanonicalSocp::from_text(&text).unwrap(), socp);
        assert!(CanonicalSocp::from_text("bogus 1").is_err());
    }
}
