//! Dense two-phase primal simplex.
//!
//! Problems are stated as `maximize c'x` subject to `A_ub x ≤ b_ub`,
//! `A_eq x = b_eq` and per-variable bounds `lower ≤ x ≤ upper` (upper may be
//! absent, lower must be finite). Variables are shifted so that the working
//! problem has `x' ≥ 0`; finite upper bounds become extra rows unless an
//! existing nonnegative row already implies them.
//!
//! Pivoting always follows Bland's rule, so the same input produces the same
//! basis. If a run of degenerate pivots exceeds the stall limit, the working
//! right-hand side is nudged by a small deterministic amount. The unperturbed
//! right-hand side is pivoted alongside, so the final basic solution is always
//! reported for the original data.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub lower: f64,
    pub upper: Option<f64>,
}

impl Bound {
    pub const NONNEG: Bound = Bound {
        lower: 0.0,
        upper: None,
    };

    pub fn new(lower: f64, upper: Option<f64>) -> Self {
        Bound { lower, upper }
    }

    pub fn boxed(lower: f64, upper: f64) -> Self {
        Bound {
            lower,
            upper: Some(upper),
        }
    }
}

/// The constraint system of an LP.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Constraints {
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub bounds: Vec<Bound>,
}

impl Constraints {
    pub fn new(bounds: Vec<Bound>) -> Self {
        Constraints {
            bounds,
            ..Default::default()
        }
    }

    pub fn n_vars(&self) -> usize {
        self.bounds.len()
    }

    pub fn le(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
        self
    }

    pub fn ge(self, row: Vec<f64>, rhs: f64) -> Self {
        let neg = row.into_iter().map(|v| -v).collect();
        self.le(neg, -rhs)
    }

    pub fn eq(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
        self
    }

    /// Largest constraint or bound violation at `x`, where each row's
    /// violation is scaled by `max(1, |rhs|)`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (row, &rhs) in self.a_ub.iter().zip(&self.b_ub) {
            worst = worst.max((dot(row, x) - rhs) / rhs.abs().max(1.0));
        }
        for (row, &rhs) in self.a_eq.iter().zip(&self.b_eq) {
            worst = worst.max((dot(row, x) - rhs).abs() / rhs.abs().max(1.0));
        }
        for (b, &v) in self.bounds.iter().zip(x) {
            worst = worst.max(b.lower - v);
            if let Some(u) = b.upper {
                worst = worst.max(v - u);
            }
        }
        worst
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.a_ub.len() != self.b_ub.len() {
            return Err(Error::DimensionMismatch {
                what: "inequality right-hand side",
                expected: self.a_ub.len(),
                got: self.b_ub.len(),
            });
        }
        if self.a_eq.len() != self.b_eq.len() {
            return Err(Error::DimensionMismatch {
                what: "equality right-hand side",
                expected: self.a_eq.len(),
                got: self.b_eq.len(),
            });
        }
        for row in self.a_ub.iter().chain(&self.a_eq) {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "constraint row",
                    expected: n,
                    got: row.len(),
                });
            }
        }
        if let Some(k) = self.bounds.iter().position(|b| !b.lower.is_finite()) {
            return Err(Error::invalid(format!("bounds[{k}]"), "lower bound must be finite"));
        }
        Ok(())
    }
}

/// `maximize c'x` over [`Constraints`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub constraints: Constraints,
}

impl LinearProgram {
    pub fn new(c: Vec<f64>, constraints: Constraints) -> Self {
        LinearProgram { c, constraints }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Pivoting failed to produce a solution that passes re-substitution.
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Whether the stall fallback perturbed the right-hand side.
    pub perturbed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    pub pivot_tol: f64,
    pub feas_tol: f64,
    pub check_tol: f64,
    /// Consecutive degenerate pivots tolerated before perturbing.
    pub stall_limit: usize,
    pub max_iter: Option<usize>,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            pivot_tol: 1e-10,
            feas_tol: 1e-9,
            check_tol: 1e-8,
            stall_limit: 500,
            max_iter: None,
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    solve_lp_with(lp, &LpOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &LpOptions) -> Result<LpSolution> {
    lp.constraints.validate()?;
    if lp.c.len() != lp.constraints.n_vars() {
        return Err(Error::DimensionMismatch {
            what: "objective",
            expected: lp.constraints.n_vars(),
            got: lp.c.len(),
        });
    }
    Ok(Simplex::run(&lp.constraints, Some(&lp.c), opts))
}

/// Phase 1 only: returns a feasible point when the system has one.
pub fn check_feasible(cons: &Constraints) -> Result<Feasibility> {
    check_feasible_with(cons, &LpOptions::default())
}

pub fn check_feasible_with(cons: &Constraints, opts: &LpOptions) -> Result<Feasibility> {
    cons.validate()?;
    let sol = Simplex::run(cons, None, opts);
    match sol.status {
        LpStatus::Optimal => Ok(Feasibility::Feasible(sol.x)),
        LpStatus::Infeasible => Ok(Feasibility::Infeasible),
        LpStatus::Unbounded | LpStatus::NumericalFailure => Err(Error::Numerical(format!(
            "phase 1 ended with status {:?} after {} pivots",
            sol.status, sol.iterations
        ))),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

struct Simplex<'a> {
    opts: &'a LpOptions,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    rhs_orig: Vec<f64>,
    basis: Vec<usize>,
    cost: Vec<f64>,
    n_struct: usize,
    first_artificial: usize,
    enterable: Vec<bool>,
    iterations: usize,
    max_iter: usize,
    perturbed: bool,
}

impl<'a> Simplex<'a> {
    fn run(cons: &Constraints, c: Option<&[f64]>, opts: &'a LpOptions) -> LpSolution {
        let failed = |status| LpSolution {
            status,
            x: Vec::new(),
            objective: f64::NAN,
            iterations: 0,
            perturbed: false,
        };
        // Empty boxes are infeasible before any pivoting.
        if cons
            .bounds
            .iter()
            .any(|b| matches!(b.upper, Some(u) if u < b.lower - opts.feas_tol))
        {
            return failed(LpStatus::Infeasible);
        }

        let mut simplex = match Simplex::build(cons, opts) {
            Some(s) => s,
            None => return failed(LpStatus::Infeasible),
        };

        match simplex.optimize() {
            Outcome::Optimal => {}
            Outcome::Unbounded | Outcome::IterationLimit => {
                return simplex.finish(cons, c, LpStatus::NumericalFailure)
            }
        }
        let infeasibility: f64 = (0..simplex.rows.len())
            .filter(|&r| simplex.basis[r] >= simplex.first_artificial)
            .map(|r| simplex.rhs_orig[r].max(0.0))
            .sum();
        let scale = cons
            .b_ub
            .iter()
            .chain(&cons.b_eq)
            .fold(1.0_f64, |acc, v| acc.max(v.abs()));
        if infeasibility > opts.feas_tol * scale {
            return simplex.finish(cons, c, LpStatus::Infeasible);
        }
        simplex.drive_out_artificials();

        let Some(c) = c else {
            return simplex.finish(cons, None, LpStatus::Optimal);
        };
        simplex.set_objective(c);
        let status = match simplex.optimize() {
            Outcome::Optimal => LpStatus::Optimal,
            Outcome::Unbounded => LpStatus::Unbounded,
            Outcome::IterationLimit => LpStatus::NumericalFailure,
        };
        simplex.finish(cons, Some(c), status)
    }

    /// Builds the phase-1 tableau. Returns `None` when a bound row is
    /// trivially infeasible.
    fn build(cons: &Constraints, opts: &'a LpOptions) -> Option<Self> {
        let n = cons.n_vars();
        let lower: Vec<f64> = cons.bounds.iter().map(|b| b.lower).collect();

        // (coefficients, rhs, is_equality) in shifted variables.
        let mut raw: Vec<(Vec<f64>, f64, bool)> = Vec::new();
        for (row, &b) in cons.a_ub.iter().zip(&cons.b_ub) {
            raw.push((row.clone(), b - dot(row, &lower), false));
        }
        for (row, &b) in cons.a_eq.iter().zip(&cons.b_eq) {
            raw.push((row.clone(), b - dot(row, &lower), true));
        }
        let implied_cap = |k: usize| -> f64 {
            raw.iter()
                .filter(|(row, rhs, _)| row[k] > 0.0 && *rhs >= 0.0 && row.iter().all(|v| *v >= 0.0))
                .map(|(row, rhs, _)| rhs / row[k])
                .fold(f64::INFINITY, f64::min)
        };
        let mut caps = Vec::new();
        for (k, b) in cons.bounds.iter().enumerate() {
            if let Some(u) = b.upper {
                let width = (u - b.lower).max(0.0);
                if implied_cap(k) > width {
                    caps.push((k, width));
                }
            }
        }
        for (k, width) in caps {
            let mut row = vec![0.0; n];
            row[k] = 1.0;
            raw.push((row, width, false));
        }

        // Sign-normalize so every rhs is nonnegative.
        let mut n_slack = 0;
        let mut n_art = 0;
        let mut kinds = Vec::with_capacity(raw.len());
        for (row, rhs, eq) in raw.iter_mut() {
            let flipped = *rhs < 0.0;
            if flipped {
                row.iter_mut().for_each(|v| *v = -*v);
                *rhs = -*rhs;
            }
            // 0: slack basic, 1: surplus + artificial, 2: artificial only
            let kind = match (*eq, flipped) {
                (true, _) => 2,
                (false, false) => 0,
                (false, true) => 1,
            };
            if kind != 2 {
                n_slack += 1;
            }
            if kind != 0 {
                n_art += 1;
            }
            kinds.push(kind);
        }

        let first_slack = n;
        let first_artificial = n + n_slack;
        let ncols = first_artificial + n_art;
        let m = raw.len();
        let mut rows = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut next_slack = first_slack;
        let mut next_art = first_artificial;
        for ((coef, b, _), kind) in raw.into_iter().zip(kinds) {
            let mut row = vec![0.0; ncols];
            row[..n].copy_from_slice(&coef);
            match kind {
                0 => {
                    row[next_slack] = 1.0;
                    basis.push(next_slack);
                    next_slack += 1;
                }
                1 => {
                    row[next_slack] = -1.0;
                    next_slack += 1;
                    row[next_art] = 1.0;
                    basis.push(next_art);
                    next_art += 1;
                }
                _ => {
                    row[next_art] = 1.0;
                    basis.push(next_art);
                    next_art += 1;
                }
            }
            rows.push(row);
            rhs.push(b);
        }

        // Phase-1 reduced costs for maximize -Σ artificials.
        let mut cost = vec![0.0; ncols];
        for (r, row) in rows.iter().enumerate() {
            if basis[r] >= first_artificial {
                for (cj, a) in cost.iter_mut().zip(row) {
                    *cj += a;
                }
            }
        }
        for cj in cost.iter_mut().skip(first_artificial) {
            *cj = 0.0;
        }

        let max_iter = opts.max_iter.unwrap_or(50 * (m + ncols) + 1000);
        Some(Simplex {
            opts,
            rhs_orig: rhs.clone(),
            rows,
            rhs,
            basis,
            cost,
            n_struct: n,
            first_artificial,
            enterable: vec![true; ncols],
            iterations: 0,
            max_iter,
            perturbed: false,
        })
    }

    fn optimize(&mut self) -> Outcome {
        let mut degenerate_run = 0usize;
        loop {
            let tol = self.opts.pivot_tol;
            let Some(s) = (0..self.cost.len()).find(|&j| self.enterable[j] && self.cost[j] > tol) else {
                return Outcome::Optimal;
            };
            if self.iterations >= self.max_iter {
                return Outcome::IterationLimit;
            }
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][s];
                if a <= tol {
                    continue;
                }
                let ratio = self.rhs[r] / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((best, best_ratio)) => {
                        let tie = (ratio - best_ratio).abs() <= 1e-12 * ratio.abs().max(best_ratio.abs());
                        if (tie && self.basis[r] < self.basis[best]) || (!tie && ratio < best_ratio) {
                            Some((r, ratio))
                        } else {
                            Some((best, best_ratio))
                        }
                    }
                };
            }
            let Some((r, ratio)) = leave else {
                return Outcome::Unbounded;
            };
            if ratio <= self.opts.feas_tol * 1e-3 {
                degenerate_run += 1;
                if degenerate_run > self.opts.stall_limit && !self.perturbed {
                    self.perturb();
                    degenerate_run = 0;
                }
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, s);
            self.iterations += 1;
        }
    }

    fn perturb(&mut self) {
        log::debug!("simplex stalled; perturbing right-hand side");
        let m = self.rows.len() as f64;
        for (r, v) in self.rhs.iter_mut().enumerate() {
            *v += self.opts.feas_tol * 1e-1 * (1.0 + r as f64 / m);
        }
        self.perturbed = true;
    }

    fn pivot(&mut self, r: usize, s: usize) {
        let p = self.rows[r][s];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        self.rhs_orig[r] /= p;
        self.rows[r][s] = 1.0;
        let pivot_row = std::mem::take(&mut self.rows[r]);
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[s];
            if f == 0.0 {
                continue;
            }
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            row[s] = 0.0;
            self.rhs[i] -= f * self.rhs[r];
            self.rhs_orig[i] -= f * self.rhs_orig[r];
            if self.rhs[i] < 0.0 && self.rhs[i] > -self.opts.feas_tol {
                self.rhs[i] = 0.0;
            }
        }
        let f = self.cost[s];
        if f != 0.0 {
            for (c, pv) in self.cost.iter_mut().zip(&pivot_row) {
                *c -= f * pv;
            }
            self.cost[s] = 0.0;
        }
        self.rows[r] = pivot_row;
        self.basis[r] = s;
    }

    /// Pivots zero-valued artificials out of the basis; rows where that is
    /// impossible are redundant and dropped.
    fn drive_out_artificials(&mut self) {
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] >= self.first_artificial {
                let col = (0..self.first_artificial)
                    .filter(|&j| self.rows[r][j].abs() > self.opts.pivot_tol)
                    .max_by(|&a, &b| {
                        self.rows[r][a]
                            .abs()
                            .partial_cmp(&self.rows[r][b].abs())
                            .unwrap()
                            .then(b.cmp(&a))
                    });
                match col {
                    Some(j) => self.pivot(r, j),
                    None => {
                        self.rows.swap_remove(r);
                        self.rhs.swap_remove(r);
                        self.rhs_orig.swap_remove(r);
                        self.basis.swap_remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        for j in self.first_artificial..self.enterable.len() {
            self.enterable[j] = false;
        }
    }

    fn set_objective(&mut self, c: &[f64]) {
        let mut cost = vec![0.0; self.cost.len()];
        cost[..self.n_struct].copy_from_slice(c);
        for (r, row) in self.rows.iter().enumerate() {
            let cb = if self.basis[r] < self.n_struct { c[self.basis[r]] } else { 0.0 };
            if cb != 0.0 {
                for (cj, a) in cost.iter_mut().zip(row) {
                    *cj -= cb * a;
                }
            }
        }
        self.cost = cost;
    }

    fn finish(&self, cons: &Constraints, c: Option<&[f64]>, status: LpStatus) -> LpSolution {
        let mut x: Vec<f64> = cons.bounds.iter().map(|b| b.lower).collect();
        for (r, &j) in self.basis.iter().enumerate() {
            if j < self.n_struct {
                x[j] += self.rhs_orig[r].max(0.0);
            }
        }
        let objective = c.map_or(0.0, |c| dot(c, &x));
        let mut status = status;
        if status == LpStatus::Optimal && cons.max_violation(&x) > self.opts.check_tol {
            log::debug!("re-substitution failed: violation {}", cons.max_violation(&x));
            status = LpStatus::NumericalFailure;
        }
        LpSolution {
            status,
            x,
            objective,
            iterations: self.iterations,
            perturbed: self.perturbed,
        }
    }
}
