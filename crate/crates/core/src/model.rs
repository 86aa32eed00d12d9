//! Model parameters and the deterministic part of the forward variance.
//!
//! `sigma_F^2(t,T) = sigma^2 (e^{-2 b1 (T-t)} + R^2 e^{-2 b2 (T-t)} + 2 rho R e^{-(b1+b2)(T-t)})`
//! is the instantaneous variance of `ln F(t,T)` when the variance factor
//! sits at its initial level `v = 1`.

use serde::{Deserialize, Serialize};

use crate::correlation::min_eigenvalue;
use crate::error::{Error, ParamReport, ParamViolation, Result};

/// Eigenvalues of the correlation matrix down to this are treated as zero.
pub const PSD_TOLERANCE: f64 = 1e-12;

/// Below this `|rate * horizon|` the exponential integrals switch to a series.
pub const SMALL_RATE: f64 = 1e-6;

/// Initial value of the variance factor. Not a free parameter.
pub const V0: f64 = 1.0;

/// The nine constant model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Volatility scale, 1/sqrt(year).
    pub sigma: f64,
    /// Mean reversion of the first factor, 1/year.
    pub beta1: f64,
    /// Mean reversion of the second factor, 1/year.
    pub beta2: f64,
    /// Loading of the second factor relative to the first.
    #[serde(rename = "R")]
    pub loading: f64,
    /// Correlation between the two forward-curve factors.
    pub rho: f64,
    /// Mean reversion of the variance factor, 1/year.
    pub beta: f64,
    /// Volatility of volatility, 1/sqrt(year).
    pub alpha: f64,
    /// Correlation between the variance factor and the first factor.
    pub rho1: f64,
    /// Correlation between the variance factor and the second factor.
    pub rho2: f64,
}

impl ModelParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sigma: f64,
        beta1: f64,
        beta2: f64,
        loading: f64,
        rho: f64,
        beta: f64,
        alpha: f64,
        rho1: f64,
        rho2: f64,
    ) -> Result<Self> {
        validate_params(Self {
            sigma,
            beta1,
            beta2,
            loading,
            rho,
            beta,
            alpha,
            rho1,
            rho2,
        })
    }

    pub fn v0(&self) -> f64 {
        V0
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    /// Row-major correlation matrix of `(dz1, dz2, dz3)`.
    pub fn correlation_matrix(&self) -> [[f64; 3]; 3] {
        [
            [1.0, self.rho, self.rho1],
            [self.rho, 1.0, self.rho2],
            [self.rho1, self.rho2, 1.0],
        ]
    }

    /// `sigma_F^2` as a function of time to settlement `T - t >= 0`.
    #[inline]
    pub fn inst_variance(&self, time_to_settle: f64) -> f64 {
        let u = time_to_settle;
        let r = self.loading;
        let s = self.sigma
            * self.sigma
            * ((-2.0 * self.beta1 * u).exp()
                + r * r * (-2.0 * self.beta2 * u).exp()
                + 2.0 * self.rho * r * (-(self.beta1 + self.beta2) * u).exp());
        // Only rounding can push this below zero for admissible parameters.
        s.max(0.0)
    }

    /// The three exponential components of `sigma_F^2`: `(coefficient, rate)`
    /// so that `sigma_F^2(t,T) = sum c * exp(-rate * (T - t))`.
    pub(crate) fn variance_terms(&self) -> [(f64, f64); 3] {
        let s2 = self.sigma * self.sigma;
        let r = self.loading;
        [
            (s2, 2.0 * self.beta1),
            (s2 * r * r, 2.0 * self.beta2),
            (s2 * 2.0 * self.rho * r, self.beta1 + self.beta2),
        ]
    }

    /// `integrated_variance` without the ordering checks.
    pub(crate) fn integrated_variance_unchecked(&self, t0: f64, t1: f64, settle: f64) -> f64 {
        let width = t1 - t0;
        if width <= 0.0 {
            return 0.0;
        }
        let total: f64 = self
            .variance_terms()
            .iter()
            .map(|&(c, rate)| c * (-rate * (settle - t1)).exp() * exp_integral(rate, width))
            .sum();
        total.max(0.0)
    }
}

/// `int_0^width exp(-rate * (width - s)) ds = (1 - exp(-rate * width)) / rate`.
#[inline]
pub(crate) fn exp_integral(rate: f64, width: f64) -> f64 {
    let x = rate * width;
    if x.abs() < SMALL_RATE {
        width * (1.0 - 0.5 * x + x * x / 6.0)
    } else {
        -(-x).exp_m1() / rate
    }
}

/// Checks every parameter invariant, reporting all violations at once.
pub fn validate_params(p: ModelParams) -> Result<ModelParams> {
    let mut bad = Vec::new();
    let fields = [
        ("sigma", p.sigma),
        ("beta1", p.beta1),
        ("beta2", p.beta2),
        ("R", p.loading),
        ("rho", p.rho),
        ("beta", p.beta),
        ("alpha", p.alpha),
        ("rho1", p.rho1),
        ("rho2", p.rho2),
    ];
    for (name, value) in fields {
        if !value.is_finite() {
            bad.push(ParamViolation::NonFinite(name));
        }
    }
    if !bad.is_empty() {
        return Err(Error::InvalidParams(ParamReport(bad)));
    }

    if p.sigma <= 0.0 {
        bad.push(ParamViolation::NonPositiveSigma(p.sigma));
    }
    for (name, value) in [
        ("beta1", p.beta1),
        ("beta2", p.beta2),
        ("beta", p.beta),
        ("alpha", p.alpha),
    ] {
        if value < 0.0 {
            bad.push(ParamViolation::NegativeRate { name, value });
        }
    }
    let mut corr_in_range = true;
    for (name, value) in [("rho", p.rho), ("rho1", p.rho1), ("rho2", p.rho2)] {
        if !(-1.0..=1.0).contains(&value) {
            corr_in_range = false;
            bad.push(ParamViolation::CorrelationOutOfRange { name, value });
        }
    }
    if corr_in_range {
        let min_eig = min_eigenvalue(&p.correlation_matrix());
        if min_eig < -PSD_TOLERANCE {
            bad.push(ParamViolation::CorrelationMatrixNotPsd {
                min_eigenvalue: min_eig,
            });
        }
    }

    if bad.is_empty() {
        Ok(p)
    } else {
        Err(Error::InvalidParams(ParamReport(bad)))
    }
}

/// Deterministic instantaneous variance rate `sigma_F^2(t, T)`.
pub fn sigma_f_sq(t: f64, settle: f64, p: &ModelParams) -> Result<f64> {
    if !(t >= 0.0 && t <= settle) {
        return Err(Error::Domain(format!(
            "sigma_F^2 needs 0 <= t <= T, got t = {t}, T = {settle}"
        )));
    }
    Ok(p.inst_variance(settle - t))
}

/// `int_{t0}^{t1} sigma_F^2(s, T) ds` in closed form.
pub fn integrated_variance(t0: f64, t1: f64, settle: f64, p: &ModelParams) -> Result<f64> {
    if !(t0 >= 0.0 && t0 <= t1 && t1 <= settle) {
        return Err(Error::Domain(format!(
            "integrated variance needs 0 <= t0 <= t1 <= T, got {t0}, {t1}, {settle}"
        )));
    }
    Ok(p.integrated_variance_unchecked(t0, t1, settle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // Adaptive Simpson; independent of the closed-form antiderivatives.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                left + right + delta / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 40)
    }

    fn raw(sigma: f64, beta1: f64, beta2: f64, loading: f64, rho: f64) -> ModelParams {
        ModelParams {
            sigma,
            beta1,
            beta2,
            loading,
            rho,
            ..presets::fig1()
        }
    }

    #[test]
    fn fig1_parameters_are_valid() {
        assert!(validate_params(presets::fig1()).is_ok());
        assert!(validate_params(presets::sec5()).is_ok());
    }

    #[test]
    fn correlation_bound_violation_is_reported() {
        let p = ModelParams {
            rho: 1.5,
            ..presets::fig1()
        };
        let Err(Error::InvalidParams(report)) = validate_params(p) else {
            panic!("expected a report");
        };
        assert!(report.contains(|v| matches!(v, ParamViolation::CorrelationOutOfRange { name: "rho", .. })));
    }

    #[test]
    fn inconsistent_correlations_are_not_psd() {
        let p = ModelParams {
            rho: -0.9,
            rho1: 0.9,
            rho2: 0.9,
            ..presets::fig1()
        };
        // Oracle: determinant 1 + 2 r r1 r2 - r^2 - r1^2 - r2^2 < 0 means a negative eigenvalue.
        let det = 1.0 + 2.0 * p.rho * p.rho1 * p.rho2 - p.rho.powi(2) - p.rho1.powi(2) - p.rho2.powi(2);
        assert!(det < 0.0);
        let Err(Error::InvalidParams(report)) = validate_params(p) else {
            panic!("expected a report");
        };
        assert!(report.contains(|v| matches!(v, ParamViolation::CorrelationMatrixNotPsd { .. })));
    }

    #[test]
    fn all_violations_are_listed() {
        let p = ModelParams {
            sigma: -1.0,
            beta1: -0.1,
            rho2: 2.0,
            ..presets::fig1()
        };
        let Err(Error::InvalidParams(report)) = validate_params(p) else {
            panic!("expected a report");
        };
        assert_eq!(report.violations().len(), 3);
    }

    #[test]
    fn non_finite_loading_rejected() {
        let p = ModelParams {
            loading: f64::NAN,
            ..presets::fig1()
        };
        assert!(validate_params(p).is_err());
    }

    #[test]
    fn sigma_f_sq_at_settlement() {
        let v = sigma_f_sq(1.0, 1.0, &presets::fig1()).unwrap();
        assert_relative_eq!(v, 0.16 * (1.0 + 0.25 - 0.3), max_relative = 1e-14);
        assert_relative_eq!(v, 0.152, max_relative = 1e-14);
    }

    #[test]
    fn sigma_f_sq_without_second_factor() {
        let p = raw(0.4, 0.3, 1.0, 0.0, 0.7);
        let v = sigma_f_sq(0.5, 2.0, &p).unwrap();
        assert_relative_eq!(v, 0.16 * (-2.0 * 0.3 * 1.5f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn sigma_f_sq_without_mean_reversion_is_flat() {
        let p = raw(0.4, 0.0, 0.0, 0.5, -0.3);
        let expect = 0.16 * (1.0 + 0.25 - 0.3);
        for (t, big_t) in [(0.0, 1.0), (0.3, 5.0), (2.0, 2.0)] {
            assert_relative_eq!(sigma_f_sq(t, big_t, &p).unwrap(), expect, max_relative = 1e-14);
        }
    }

    #[test]
    fn sigma_f_sq_domain() {
        let p = presets::fig1();
        assert!(matches!(sigma_f_sq(2.0, 1.0, &p), Err(Error::Domain(_))));
        assert!(matches!(sigma_f_sq(-0.1, 1.0, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn integrated_variance_trivial_cases() {
        let p = presets::fig1();
        assert_eq!(integrated_variance(0.4, 0.4, 1.0, &p).unwrap(), 0.0);
        let flat = raw(0.4, 0.0, 0.0, 0.5, -0.3);
        assert_relative_eq!(
            integrated_variance(0.0, 1.0, 1.0, &flat).unwrap(),
            0.16 * (1.0 + 0.25 - 0.3),
            max_relative = 1e-14
        );
        assert!(integrated_variance(0.5, 0.4, 1.0, &p).is_err());
        assert!(integrated_variance(0.0, 1.5, 1.0, &p).is_err());
    }

    #[test]
    fn integrated_variance_matches_quadrature_fig1() {
        let p = presets::fig1();
        let closed = integrated_variance(0.0, 1.0, 1.0, &p).unwrap();
        let quad = adaptive_simpson(&|s| p.inst_variance(1.0 - s), 0.0, 1.0, 1e-15);
        assert_relative_eq!(closed, quad, max_relative = 1e-10);
    }

    #[test]
    fn integrated_variance_small_rate_series_is_continuous() {
        // beta1 straddling the series threshold must not jump.
        let a = raw(0.4, 0.999e-6, 1.0, 0.5, -0.3);
        let b = raw(0.4, 1.001e-6, 1.0, 0.5, -0.3);
        let ia = integrated_variance(0.0, 0.5, 1.0, &a).unwrap();
        let ib = integrated_variance(0.0, 0.5, 1.0, &b).unwrap();
        assert_relative_eq!(ia, ib, max_relative = 1e-8);
    }

    #[test]
    fn samuelson_direction() {
        let p = presets::fig1();
        let near = sigma_f_sq(2.0, 2.0, &p).unwrap();
        let far = sigma_f_sq(0.0, 2.0, &p).unwrap();
        assert!(near >= far);
    }

    fn admissible() -> impl Strategy<Value = ModelParams> {
        (0.05..1.5f64, 0.0..3.0f64, 0.0..3.0f64, -1.5..1.5f64, -0.99..0.99f64)
            .prop_map(|(sigma, beta1, beta2, loading, rho)| raw(sigma, beta1, beta2, loading, rho))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn sigma_f_sq_nonnegative(p in admissible(), t in 0.0..5.0f64, extra in 0.0..10.0f64) {
            prop_assert!(sigma_f_sq(t, t + extra, &p).unwrap() >= 0.0);
        }

        #[test]
        fn integrated_variance_agrees_with_quadrature(
            p in admissible(),
            t0 in 0.0..2.0f64,
            w in 0.0..3.0f64,
            extra in 0.0..4.0f64,
        ) {
            let t1 = t0 + w;
            let settle = t1 + extra;
            let closed = integrated_variance(t0, t1, settle, &p).unwrap();
            let quad = adaptive_simpson(&|s| p.inst_variance(settle - s), t0, t1, 1e-16);
            let scale = closed.abs().max(1e-300);
            prop_assert!((closed - quad).abs() <= 1e-10 * scale + 1e-15, "closed {closed} quad {quad}");
        }

        #[test]
        fn variance_rises_into_settlement(
            sigma in 0.05..1.5f64, beta1 in 0.01..3.0f64, beta2 in 0.01..3.0f64,
            loading in 0.01..1.5f64, rho_frac in 0.0..1.0f64, settle in 0.1..10.0f64,
        ) {
            // sigma_F^2 is convex in (e^{-b1 u}, e^{-b2 u}), so its maximum over the
            // unit square sits at a corner; rho >= -min(R, 1/R)/2 makes (1,1) the largest.
            let floor = -0.5 * loading.min(1.0 / loading);
            let rho = floor + rho_frac * (0.99 - floor);
            let p = raw(sigma, beta1, beta2, loading, rho);
            prop_assert!(sigma_f_sq(settle, settle, &p).unwrap() >= sigma_f_sq(0.0, settle, &p).unwrap());
        }
    }
}
