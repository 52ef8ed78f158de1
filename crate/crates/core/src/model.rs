//! Shared domain types: flow parameters, the design problem, and the
//! information/design vectors that pass between solvers and filters.
//!
//! Every design variable is a sampling probability at one observation point.
//! Per-flow information is the inverse variance (1/packets²) of that flow's
//! fused measurement in one period, and is linear in the design: `m = J ξ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute tolerance for re-substituting solver outputs into constraints.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Random-walk parameters of the tracked flows.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    sigma2: Vec<f64>,
    mu: Vec<f64>,
}

impl FlowModel {
    pub fn new(sigma2: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        if sigma2.is_empty() {
            return Err(Error::invalid("n_r", "at least one flow is required"));
        }
        if sigma2.len() != mu.len() {
            return Err(Error::DimensionMismatch {
                what: "flow model mu",
                expected: sigma2.len(),
                got: mu.len(),
            });
        }
        if let Some(i) = sigma2.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(
                format!("sigma2[{i}]"),
                format!("innovation variance must be positive, got {}", sigma2[i]),
            ));
        }
        if let Some(i) = mu.iter().position(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::invalid(
                format!("mu[{i}]"),
                format!("mean volume must be positive, got {}", mu[i]),
            ));
        }
        Ok(FlowModel { sigma2, mu })
    }

    /// Flow model for abstract problems where mean volumes play no role.
    pub fn from_sigma2(sigma2: Vec<f64>) -> Result<Self> {
        let mu = vec![1.0; sigma2.len()];
        Self::new(sigma2, mu)
    }

    pub fn n_flows(&self) -> usize {
        self.sigma2.len()
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
}

/// Per-flow observed information for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationVector(Vec<f64>);

impl InformationVector {
    pub fn new(m: Vec<f64>) -> Result<Self> {
        if let Some(i) = m.iter().position(|v| !(*v >= 0.0)) {
            return Err(Error::invalid(
                format!("m[{i}]"),
                format!("information must be nonnegative, got {}", m[i]),
            ));
        }
        Ok(InformationVector(m))
    }

    pub fn zeros(n: usize) -> Self {
        InformationVector(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Sampling rates, one per observation point.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignVector(Vec<f64>);

impl DesignVector {
    pub fn new(xi: Vec<f64>) -> Self {
        DesignVector(xi)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for DesignVector {
    fn from(v: Vec<f64>) -> Self {
        DesignVector(v)
    }
}

/// Everything a design solver needs: the information map `J` and the
/// budget system `R ξ (≤|=) b` with per-variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignProblem {
    pub j: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub b: Vec<f64>,
    pub row_is_equality: Vec<bool>,
    pub lower: Vec<f64>,
    /// `None` leaves the variable uncapped.
    pub upper: Vec<Option<f64>>,
}

impl DesignProblem {
    /// Inequality budgets, `0 ≤ ξ ≤ 1`.
    pub fn new(j: DMatrix<f64>, r: DMatrix<f64>, b: Vec<f64>) -> Self {
        let n_o = j.ncols();
        let n_v = r.nrows();
        DesignProblem {
            j,
            r,
            b,
            row_is_equality: vec![false; n_v],
            lower: vec![0.0; n_o],
            upper: vec![Some(1.0); n_o],
        }
    }

    /// Convenience constructor from row slices.
    pub fn from_rows(j: &[&[f64]], r: &[&[f64]], b: &[f64]) -> Self {
        Self::new(dense(j), dense(r), b.to_vec())
    }

    pub fn without_caps(mut self) -> Self {
        self.upper = vec![None; self.n_design()];
        self
    }

    pub fn with_equalities(mut self, flags: Vec<bool>) -> Self {
        self.row_is_equality = flags;
        self
    }

    pub fn n_flows(&self) -> usize {
        self.j.nrows()
    }

    pub fn n_design(&self) -> usize {
        self.j.ncols()
    }

    pub fn n_budgets(&self) -> usize {
        self.r.nrows()
    }

    /// `m = J ξ`.
    pub fn information(&self, xi: &[f64]) -> Vec<f64> {
        (0..self.n_flows())
            .map(|i| {
                self.j
                    .row(i)
                    .iter()
                    .zip(xi)
                    .map(|(a, x)| a * x)
                    .sum::<f64>()
            })
            .collect()
    }

    /// Largest violation of bounds and budget rows at `xi` (0 when feasible).
    pub fn max_violation(&self, xi: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, &x) in xi.iter().enumerate() {
            worst = worst.max(self.lower[k] - x);
            if let Some(u) = self.upper[k] {
                worst = worst.max(x - u);
            }
        }
        for row in 0..self.n_budgets() {
            let lhs: f64 = self.r.row(row).iter().zip(xi).map(|(a, x)| a * x).sum();
            let gap = lhs - self.b[row];
            worst = worst.max(if self.row_is_equality[row] { gap.abs() } else { gap });
        }
        worst
    }

    fn check_dimensions(&self) -> Result<()> {
        let n_o = self.n_design();
        let n_v = self.n_budgets();
        let checks: [(&'static str, usize, usize); 5] = [
            ("budget matrix columns", n_o, self.r.ncols()),
            ("budget vector", n_v, self.b.len()),
            ("equality flags", n_v, self.row_is_equality.len()),
            ("lower bounds", n_o, self.lower.len()),
            ("upper bounds", n_o, self.upper.len()),
        ];
        for (what, expected, got) in checks {
            if expected != got {
                return Err(Error::DimensionMismatch { what, expected, got });
            }
        }
        Ok(())
    }
}

/// Builds a dense matrix from row slices. All rows must share a length.
pub fn dense(rows: &[&[f64]]) -> DMatrix<f64> {
    let ncols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), ncols, |i, k| rows[i][k])
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    /// Flows whose row of `J` is identically zero.
    pub unobservable_flows: Vec<usize>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.unobservable_flows.is_empty()
    }

    pub fn warnings(&self) -> Vec<String> {
        self.unobservable_flows
            .iter()
            .map(|i| {
                format!(
                    "flow {} is unobservable (no observation point carries it); \
                     its steady-state information is 0 for every design",
                    i + 1
                )
            })
            .collect()
    }
}

/// Structural checks on a problem. Dimension mismatches and negative budgets
/// are hard errors; unobservable flows are reported as warnings.
pub fn validate_problem(p: &DesignProblem, fm: &FlowModel) -> Result<ValidationReport> {
    p.check_dimensions()?;
    if fm.n_flows() != p.n_flows() {
        return Err(Error::DimensionMismatch {
            what: "flow model vs information map rows",
            expected: p.n_flows(),
            got: fm.n_flows(),
        });
    }
    if let Some(v) = p.j.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid("J", format!("entries must be nonnegative, found {v}")));
    }
    if let Some(row) = p.b.iter().position(|v| *v < 0.0) {
        return Err(Error::Infeasible(format!(
            "budget row {} is negative ({}) while sampling rates are nonnegative",
            row + 1,
            p.b[row]
        )));
    }
    for k in 0..p.n_design() {
        if let Some(u) = p.upper[k] {
            if p.lower[k] > u {
                return Err(Error::Infeasible(format!(
                    "variable {} has lower bound {} above upper bound {}",
                    k + 1,
                    p.lower[k],
                    u
                )));
            }
        }
    }
    let unobservable_flows = (0..p.n_flows())
        .filter(|&i| p.j.row(i).iter().all(|v| *v == 0.0))
        .collect();
    Ok(ValidationReport { unobservable_flows })
}
