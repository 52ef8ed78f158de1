//! Scalar Kalman filters for independent random walks, kept in information
//! form (inverse posterior variance) so that a diffuse prior is just `0`.

use crate::error::{Error, Result};
use crate::model::{FlowModel, InformationVector};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Posterior of the filter bank after period `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    /// Inverse posterior variance per flow; `0` is a diffuse prior.
    pub info: Vec<f64>,
    /// Posterior mean per flow. Only meaningful where `info > 0`.
    pub mean: Vec<f64>,
    pub t: usize,
}

impl FilterState {
    pub fn diffuse(n: usize) -> Self {
        FilterState {
            info: vec![0.0; n],
            mean: vec![0.0; n],
            t: 0,
        }
    }

    /// Starts from a given prior mean and information.
    pub fn with_prior(mean: Vec<f64>, info: Vec<f64>) -> Result<Self> {
        if mean.len() != info.len() {
            return Err(Error::DimensionMismatch {
                what: "prior information",
                expected: mean.len(),
                got: info.len(),
            });
        }
        if let Some(i) = info.iter().position(|v| !(*v >= 0.0)) {
            return Err(Error::invalid(format!("info[{i}]"), "prior information must be nonnegative"));
        }
        Ok(FilterState { info, mean, t: 0 })
    }

    /// Posterior variances `s_i(t)`; infinite for flows with no information.
    pub fn variances(&self) -> Vec<f64> {
        self.info.iter().map(|m| 1.0 / m).collect()
    }

    /// One prediction + measurement step. Flows with `m_i = 0` only predict.
    pub fn predict_update(
        &self,
        fm: &FlowModel,
        m: &InformationVector,
        y: &[Option<f64>],
    ) -> Result<FilterState> {
        let n = self.info.len();
        for (what, got) in [
            ("flow model", fm.n_flows()),
            ("information vector", m.len()),
            ("observations", y.len()),
        ] {
            if got != n {
                return Err(Error::DimensionMismatch { what, expected: n, got });
            }
        }
        let mut next = self.clone();
        next.t += 1;
        for i in 0..n {
            let m_i = m.as_slice()[i];
            let predicted = predicted_info(self.info[i], fm.sigma2()[i]);
            next.info[i] = predicted + m_i;
            if m_i > 0.0 {
                let obs = y[i].ok_or_else(|| {
                    Error::invalid(format!("y[{i}]"), "observation missing for flow with m > 0")
                })?;
                let gain = m_i / next.info[i];
                next.mean[i] = self.mean[i] + gain * (obs - self.mean[i]);
            }
        }
        Ok(next)
    }
}

/// Information after the prediction step, `m̃ / (1 + σ² m̃)`.
#[inline]
pub fn predicted_info(info: f64, sigma2: f64) -> f64 {
    info / (1.0 + sigma2 * info)
}

/// One step of the information recursion.
#[inline]
pub fn riccati_step(info: f64, m: f64, sigma2: f64) -> f64 {
    predicted_info(info, sigma2) + m
}

/// Steady-state information for per-period information `m` and innovation
/// variance `sigma2`: the nonnegative root of `σ² x² − σ² m x − m = 0`.
pub fn steady_state_info(m: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(
            "sigma2",
            "steady state requires positive innovation variance",
        ));
    }
    if !(m >= 0.0) {
        return Err(Error::invalid("m", format!("information must be nonnegative, got {m}")));
    }
    Ok(steady_state_info_unchecked(m, sigma2))
}

#[inline]
pub(crate) fn steady_state_info_unchecked(m: f64, sigma2: f64) -> f64 {
    let half = 0.5 * m;
    half + (half * half + m / sigma2).sqrt()
}

/// Per-period information `m` needed to reach steady-state information
/// `theta`: `θ² / (θ + 1/σ²)`. Inverse of [`steady_state_info`].
#[inline]
pub fn required_info(theta: f64, sigma2: f64) -> f64 {
    theta * theta / (theta + 1.0 / sigma2)
}

/// Iterates the information recursion from a diffuse start until every
/// flow's relative change drops below `tol`.
pub fn iterate_to_steady_state(
    fm: &FlowModel,
    m: &InformationVector,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    iterate_from(fm, m, vec![0.0; fm.n_flows()], tol, max_iter)
}

/// As [`iterate_to_steady_state`] from an arbitrary nonnegative start.
pub fn iterate_from(
    fm: &FlowModel,
    m: &InformationVector,
    start: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "tolerance must be positive"));
    }
    if m.len() != fm.n_flows() || start.len() != fm.n_flows() {
        return Err(Error::DimensionMismatch {
            what: "information vector",
            expected: fm.n_flows(),
            got: m.len().min(start.len()),
        });
    }
    let mut cur = start;
    for _ in 0..max_iter {
        let mut converged = true;
        for ((x, &m_i), &s2) in cur.iter_mut().zip(m.as_slice()).zip(fm.sigma2()) {
            let next = riccati_step(*x, m_i, s2);
            if (next - *x).abs() > tol * next.abs() {
                converged = false;
            }
            *x = next;
        }
        if converged {
            return Ok(cur);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last: cur,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fm(sigma2: &[f64]) -> FlowModel {
        FlowModel::from_sigma2(sigma2.to_vec()).unwrap()
    }

    fn info(m: &[f64]) -> InformationVector {
        InformationVector::new(m.to_vec()).unwrap()
    }

    #[test]
    fn diffuse_prior_absorbs_first_observation() {
        let s = FilterState::diffuse(1);
        let next = s.predict_update(&fm(&[1.0]), &info(&[5.0]), &[Some(42.0)]).unwrap();
        assert_eq!(next.info, vec![5.0]);
        assert_eq!(next.mean, vec![42.0]);
        assert_eq!(next.t, 1);
    }

    #[test]
    fn hand_evaluated_update() {
        // s(t-1) = 1, s(t|t-1) = 2, 1/s(t) = 1/2 + 1
        let s = FilterState::with_prior(vec![0.0], vec![1.0]).unwrap();
        let next = s.predict_update(&fm(&[1.0]), &info(&[1.0]), &[Some(3.0)]).unwrap();
        assert_relative_eq!(next.info[0], 1.5, epsilon = 1e-15);
        assert_relative_eq!(next.mean[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn prediction_only_step() {
        let s = FilterState::with_prior(vec![7.0], vec![1.0]).unwrap();
        let next = s.predict_update(&fm(&[1.0]), &info(&[0.0]), &[None]).unwrap();
        assert_relative_eq!(next.info[0], 0.5, epsilon = 1e-15);
        assert_eq!(next.mean[0], 7.0);
    }

    #[test]
    fn missing_observation_with_information_is_rejected() {
        let s = FilterState::diffuse(1);
        assert!(s.predict_update(&fm(&[1.0]), &info(&[1.0]), &[None]).is_err());
    }

    #[test]
    fn closed_form_values() {
        // Frozen from a variance-form Riccati iteration run to |Δ| < 1e-13.
        assert_eq!(steady_state_info(0.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(steady_state_info(1.0, 1.0).unwrap(), 1.6180339887498896, max_relative = 1e-14);
        assert_relative_eq!(steady_state_info(25.0, 0.01).unwrap(), 64.03882032021778, max_relative = 1e-13);
        assert_relative_eq!(steady_state_info(25.0, 0.04).unwrap(), 40.450849718747236, max_relative = 1e-13);
        assert!(steady_state_info(1.0, 0.0).is_err());
        assert!(steady_state_info(-1.0, 1.0).is_err());
    }

    #[test]
    fn iteration_matches_closed_form() {
        let got = iterate_to_steady_state(&fm(&[1.0]), &info(&[1.0]), 1e-12, DEFAULT_MAX_ITER).unwrap();
        assert_relative_eq!(got[0], 1.6180339887498896, max_relative = 1e-10);
        let got = iterate_to_steady_state(&fm(&[0.04]), &info(&[25.0]), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_relative_eq!(got[0], steady_state_info(25.0, 0.04).unwrap(), max_relative = 1e-10);
    }

    #[test]
    fn zero_information_converges_immediately() {
        let got = iterate_to_steady_state(&fm(&[1.0, 2.0]), &info(&[0.0, 0.0]), 1e-10, 1).unwrap();
        assert_eq!(got, vec![0.0, 0.0]);
    }

    #[test]
    fn iteration_limit_reports_last_iterate() {
        match iterate_to_steady_state(&fm(&[1e-6]), &info(&[1e-3]), 1e-12, 3) {
            Err(Error::NoConvergence { iterations, last }) => {
                assert_eq!(iterations, 3);
                assert_eq!(last.len(), 1);
                assert!(last[0] > 0.0);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn large_innovation_variance_limit() {
        for m in [0.1, 1.0, 10.0] {
            let x = steady_state_info(m, 1e12).unwrap();
            assert!(x >= m && x <= m + 1e-5, "m={m} x={x}");
        }
    }

    #[test]
    fn filter_trajectory_matches_iteration() {
        let model = fm(&[0.3, 2.0]);
        let m = info(&[0.7, 0.05]);
        let mut state = FilterState::diffuse(2);
        let mut manual = vec![0.0, 0.0];
        for _ in 0..50 {
            state = state.predict_update(&model, &m, &[Some(0.0), Some(0.0)]).unwrap();
            for i in 0..2 {
                manual[i] = riccati_step(manual[i], m.as_slice()[i], model.sigma2()[i]);
            }
            assert_eq!(state.info, manual);
        }
    }

    proptest! {
        #[test]
        fn fixed_point_consistency(m in 0.0f64..1e3, s2 in 1e-6f64..1e3) {
            let x = steady_state_info(m, s2).unwrap();
            if m == 0.0 {
                prop_assert_eq!(x, 0.0);
            } else {
                let back = 1.0 / (1.0 / x + s2) + m;
                prop_assert!((back - x).abs() <= 1e-10 * x);
            }
        }

        #[test]
        fn monotone_in_both_arguments(m in 1e-3f64..1e3, s2 in 1e-4f64..1e3, f in 1.01f64..3.0) {
            let base = steady_state_info(m, s2).unwrap();
            prop_assert!(steady_state_info(m * f, s2).unwrap() > base);
            prop_assert!(steady_state_info(m, s2 * f).unwrap() < base);
            prop_assert!(base >= m);
        }

        #[test]
        fn inverse_of_required_info(theta in 1e-3f64..1e4, s2 in 1e-4f64..1e3) {
            let m = required_info(theta, s2);
            let back = steady_state_info(m, s2).unwrap();
            prop_assert!((back - theta).abs() <= 1e-11 * theta);
        }

        #[test]
        fn any_start_reaches_same_limit(
            m in 0.01f64..100.0,
            s2 in 0.01f64..10.0,
            starts in proptest::collection::vec(0.0f64..1e3, 3),
        ) {
            let model = FlowModel::from_sigma2(vec![s2]).unwrap();
            let iv = InformationVector::new(vec![m]).unwrap();
            let closed = steady_state_info(m, s2).unwrap();
            for s in starts {
                let got = iterate_from(&model, &iv, vec![s], 1e-13, DEFAULT_MAX_ITER).unwrap();
                prop_assert!((got[0] - closed).abs() <= 1e-9 * closed);
            }
        }
    }
}
