//! Non-linear propagator: child `j` of size `q_j` contributes
//! `G0 sqrt(q_j) (dt / (t - t_j + s0))^beta` to the price at time `t >= t_j`.
//!
//! The kernel acts on `sqrt(q_j)`, not on `q_j`: doubling a child's size
//! raises its impact by `sqrt 2` at every lag. A linear propagator would
//! double it.

use crate::impact::ChildCurveFit;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagatorError {
    #[error("closed form needs beta = 1/2, got {0}")]
    UnsupportedBeta(f64),
    #[error("no usable child-profile fit")]
    FitUnavailable,
    #[error("invalid parameters: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorParams {
    /// Kernel prefactor `G0`, impact per square-root share at lag `dt - s0`.
    pub g0: f64,
    /// Lag regularizer, seconds.
    pub s0: f64,
    pub beta: f64,
    /// Reference child spacing, seconds.
    pub dt: f64,
}

impl PropagatorParams {
    pub fn new(g0: f64, s0: f64, beta: f64, dt: f64) -> Result<Self, PropagatorError> {
        let p = Self { g0, s0, beta, dt };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PropagatorError> {
        if !(self.g0 > 0.0) {
            return Err(PropagatorError::Invalid("G0 must be positive"));
        }
        if !(self.s0 >= 0.0) {
            return Err(PropagatorError::Invalid("s0 must be non-negative"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(PropagatorError::Invalid("beta must lie in (0, 1)"));
        }
        if !(self.dt > 0.0 && (self.s0 / self.dt).is_finite()) {
            return Err(PropagatorError::Invalid("dt must be positive"));
        }
        Ok(())
    }

    /// `i0 = s0 / dt`.
    pub fn offset(&self) -> f64 {
        self.s0 / self.dt
    }

    /// Kernel value for one child of size `q` at lag `tau >= 0` seconds.
    pub fn kernel(&self, q: f64, tau: f64) -> f64 {
        self.g0 * q.sqrt() * (self.dt / (tau + self.s0)).powf(self.beta)
    }
}

/// `2 G0 sqrt(q) (sqrt(i + i0) - sqrt(i0))` for `i` equally spaced children.
pub fn closed_form_partial_impact(q: f64, i: f64, p: &PropagatorParams) -> Result<f64, PropagatorError> {
    if p.beta != 0.5 {
        return Err(PropagatorError::UnsupportedBeta(p.beta));
    }
    let i0 = p.offset();
    Ok(2.0 * p.g0 * q.sqrt() * ((i + i0).sqrt() - i0.sqrt()))
}

/// Exact sum of kernel contributions of children `(q_j, t_j)` at `t_eval`.
pub fn discrete_sum_impact(sizes: &[f64], times: &[f64], t_eval: f64, p: &PropagatorParams) -> f64 {
    sizes
        .iter()
        .zip(times)
        .filter(|(_, &t)| t <= t_eval)
        .map(|(&q, &t)| p.kernel(q, t_eval - t))
        .sum()
}

/// Bracket `sqrt(1 + i0/N) - sqrt(i0/N)` multiplying `sqrt(Q)` in the total impact.
pub fn total_impact_bracket(n: f64, i0: f64) -> f64 {
    (1.0 + i0 / n).sqrt() - (i0 / n).sqrt()
}

/// Total impact of a metaorder of `Q` shares in `N` equal children:
/// `2 G0 sqrt(Q) (sqrt(1 + i0/N) - sqrt(i0/N))`.
pub fn total_impact_prediction(total: f64, n: f64, p: &PropagatorParams) -> f64 {
    2.0 * p.g0 * total.sqrt() * total_impact_bracket(n, p.offset())
}

/// Closed form for arbitrary child times, using `dt = T / (N - 1)`.
pub fn closed_form_for_times(sizes: &[f64], times: &[f64], p: &PropagatorParams) -> Result<f64, PropagatorError> {
    let n = sizes.len();
    if n == 0 {
        return Ok(0.0);
    }
    let dt = if n > 1 { (times[n - 1] - times[0]) / (n - 1) as f64 } else { p.dt };
    if !(dt > 0.0) {
        return Err(PropagatorError::Invalid("children must span a positive time"));
    }
    let q = sizes.iter().sum::<f64>() / n as f64;
    let local = PropagatorParams { dt, s0: p.s0, ..*p };
    let scale = (local.dt / p.dt).powf(p.beta);
    closed_form_partial_impact(q, n as f64, &local).map(|v| v / scale)
}

/// Maps a child-profile fit to kernel parameters: `G0 = A / 2`, `s0 = i0 dt`.
pub fn calibrate(fit: &ChildCurveFit, mean_dt: f64) -> Result<PropagatorParams, PropagatorError> {
    if !(fit.amplitude.is_finite() && fit.offset.is_finite() && fit.beta.is_finite()) {
        return Err(PropagatorError::FitUnavailable);
    }
    PropagatorParams::new(fit.amplitude / 2.0, fit.offset * mean_dt, fit.beta, mean_dt)
        .map_err(|_| PropagatorError::FitUnavailable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sq(g0: f64, i0: f64, dt: f64) -> PropagatorParams {
        PropagatorParams::new(g0, i0 * dt, 0.5, dt).unwrap()
    }

    fn uniform(i: usize, q: f64, dt: f64) -> (Vec<f64>, Vec<f64>) {
        (vec![q; i], (0..i).map(|k| k as f64 * dt).collect())
    }

    #[test]
    fn closed_form_arithmetic() {
        let p = sq(1.0, 4.0, 1.0);
        let v = closed_form_partial_impact(1.0, 16.0, &p).unwrap();
        assert!((v - 4.944_271_909_999_159).abs() < 1e-12);
        assert_eq!(closed_form_partial_impact(1.0, 0.0, &p).unwrap(), 0.0);
        let big = closed_form_partial_impact(9.0, 1e10, &p).unwrap();
        assert!((big / (2.0 * (9.0f64 * 1e10).sqrt()) - 1.0).abs() < 1e-4);
        let bad = PropagatorParams::new(1.0, 4.0, 0.48, 1.0).unwrap();
        assert_eq!(closed_form_partial_impact(1.0, 1.0, &bad), Err(PropagatorError::UnsupportedBeta(0.48)));
    }

    #[test]
    fn single_child_sum() {
        let p = sq(1.5, 4.0, 2.0);
        let v = discrete_sum_impact(&[9.0], &[0.0], 10.0, &p);
        assert!((v - 1.5 * 3.0 * (2.0f64 / 18.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sum_tracks_closed_form() {
        let p = sq(1.0, 4.0, 1.0);
        let mut gaps = Vec::new();
        for i in [10usize, 20, 40, 80] {
            let (q, t) = uniform(i, 1.0, 1.0);
            let s = discrete_sum_impact(&q, &t, t[i - 1], &p);
            // independent oracle: the explicit series over k + i0
            let oracle: f64 = (0..i).map(|k| 1.0 / ((k as f64) + 4.0).sqrt()).sum();
            assert!((s - oracle).abs() < 1e-12);
            let c = closed_form_partial_impact(1.0, i as f64, &p).unwrap();
            gaps.push((s - c).abs() / c);
        }
        // frozen from a direct tabulation: 3.47%, 2.63%, 1.94%, 1.40%
        let expected = [0.0347, 0.0263, 0.0194, 0.0140];
        for (g, e) in gaps.iter().zip(expected) {
            assert!((g - e).abs() < 5e-4, "{gaps:?}");
        }
        assert!(gaps.windows(2).all(|w| w[1] < w[0]));
        assert!(gaps[0] < 0.05);
    }

    #[test]
    fn closed_form_rescales_spacing() {
        let p = sq(1.0, 4.0, 10.0);
        let (q, t) = uniform(400, 2.0, 5.0);
        let c = closed_form_for_times(&q, &t, &p).unwrap();
        let s = discrete_sum_impact(&q, &t, t[399], &p);
        assert!((c - s).abs() / s < 0.01);
    }

    #[test]
    fn total_bracket_values() {
        assert!((total_impact_bracket(2.0, 4.0) - (3f64.sqrt() - 2f64.sqrt())).abs() < 1e-15);
        assert!((total_impact_bracket(2.0, 4.0) - 0.3178).abs() < 1e-4);
        assert!((total_impact_bracket(1e12, 4.0) - 1.0).abs() < 1e-5);
        for n in [1.0, 2.0, 7.0, 100.0] {
            assert_eq!(total_impact_bracket(n, 0.0), 1.0);
        }
    }

    #[test]
    fn total_matches_partial_at_horizon() {
        let p = sq(0.7, 4.0, 30.0);
        for n in [1.0, 3.0, 12.0] {
            let q = 500.0 / n;
            let partial = closed_form_partial_impact(q, n, &p).unwrap();
            assert!((total_impact_prediction(500.0, n, &p) - partial).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_mapping() {
        let fit = ChildCurveFit { amplitude: 2.0, offset: 4.0, beta: 0.5, se: [0.0; 3], rss: 0.0 };
        let p = calibrate(&fit, 30.0).unwrap();
        assert_eq!((p.g0, p.s0, p.beta, p.dt), (1.0, 120.0, 0.5, 30.0));
        let broken = ChildCurveFit { amplitude: f64::NAN, ..fit };
        assert_eq!(calibrate(&broken, 30.0), Err(PropagatorError::FitUnavailable));
    }

    #[test]
    fn params_json_round_trip() {
        let p = sq(0.3, 4.0, 25.0);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<PropagatorParams>(&s).unwrap(), p);
    }

    proptest! {
        #[test]
        fn homogeneity(c in 0.1f64..10.0, i in 1usize..60, i0 in 0.5f64..10.0) {
            let p = sq(1.0, i0, 1.0);
            let (q, t) = uniform(i, 3.0, 1.0);
            let qc: Vec<f64> = q.iter().map(|x| x * c * c).collect();
            let a = discrete_sum_impact(&q, &t, t[i - 1], &p);
            let b = discrete_sum_impact(&qc, &t, t[i - 1], &p);
            prop_assert!((b / a - c).abs() < 1e-9);
            let ca = closed_form_partial_impact(3.0, i as f64, &p).unwrap();
            let cb = closed_form_partial_impact(3.0 * c * c, i as f64, &p).unwrap();
            prop_assert!((cb / ca - c).abs() < 1e-9);
        }

        #[test]
        fn monotone_in_rank_and_size(i in 1usize..200, q in 1.0f64..1e4, i0 in 0.1f64..20.0) {
            let p = sq(1.0, i0, 1.0);
            let a = closed_form_partial_impact(q, i as f64, &p).unwrap();
            prop_assert!(closed_form_partial_impact(q, i as f64 + 1.0, &p).unwrap() > a);
            prop_assert!(closed_form_partial_impact(q * 1.01, i as f64, &p).unwrap() > a);
            let (qs, ts) = uniform(i, q, 1.0);
            let (qs2, ts2) = uniform(i + 1, q, 1.0);
            prop_assert!(discrete_sum_impact(&qs2, &ts2, ts2[i], &p) > discrete_sum_impact(&qs, &ts, ts[i - 1], &p));
        }

        #[test]
        fn relative_gap_below_five_percent(i in 10usize..400) {
            let p = sq(1.0, 4.0, 1.0);
            let (q, t) = uniform(i, 1.0, 1.0);
            let s = discrete_sum_impact(&q, &t, t[i - 1], &p);
            let c = closed_form_partial_impact(1.0, i as f64, &p).unwrap();
            prop_assert!((s - c).abs() / c < 0.05);
        }
    }
}
