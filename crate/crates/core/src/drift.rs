//! Variance-matched drift factor `k(t,T)`.
//!
//! The factor Monte Carlo replaces the per-settlement drift integral
//! `int_0^t w(s) sigma_F^2(s,T) ds` (with `w = v - 1`) by `k(t,T) int_0^t w(s) ds`.
//! `k` is chosen so both have the same variance:
//!
//! ```text
//! k^2 = int_0^t int_0^{s2} sigma_F^2(s1,T) sigma_F^2(s2,T) J(s1,s2) ds1 ds2
//!     / int_0^t int_0^{s2} J(s1,s2) ds1 ds2
//! J(s1,s2) = E[w(s1) w(s2)] = alpha^2/(2 beta) (1 - e^{-2 beta min}) e^{-beta |s2 - s1|}
//! ```
//!
//! The nested Gauss-Legendre evaluation of this ratio is the reference
//! implementation. A long closed form is available as a fast path; it is only
//! used after a one-time self-check against the quadrature.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, SMALL_RATE};
use crate::quadrature::GaussLegendre;

pub const NUMERIC_NODES: usize = 64;
/// Relative change allowed when the node count doubles.
pub const NUMERIC_TOLERANCE: f64 = 1e-8;
/// Agreement required between the closed form and the quadrature.
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-6;
/// Smallest rate combination, relative to the largest rate, the closed form accepts.
pub const DEGENERACY_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMethod {
    Numeric,
    ClosedForm,
    /// `alpha = 0` or `t = 0`: `k` multiplies an identically zero integral;
    /// the time average of `sigma_F^2` is used.
    Fallback,
}

impl DriftMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            DriftMethod::Numeric => "numeric",
            DriftMethod::ClosedForm => "closed_form",
            DriftMethod::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftFactorResult {
    pub k_sq: f64,
    pub method: DriftMethod,
    pub t: f64,
    pub settlement: f64,
}

impl DriftFactorResult {
    pub fn k(&self) -> f64 {
        self.k_sq.sqrt()
    }
}

/// `E[w(s1) w(s2)]` for the centered variance factor.
pub fn cov_w(s1: f64, s2: f64, beta: f64, alpha: f64) -> f64 {
    let (a, b) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
    if (beta * b).abs() < SMALL_RATE {
        // first order in beta; exact at beta = 0
        alpha * alpha * a * (-beta * b).exp()
    } else {
        alpha * alpha * (-(-2.0 * beta * a).exp_m1()) / (2.0 * beta) * (-beta * (b - a)).exp()
    }
}

fn check_times(t: f64, settle: f64) -> Result<()> {
    if !(t > 0.0 && t <= settle && settle.is_finite()) {
        return Err(Error::Domain(format!(
            "drift factor needs 0 < t <= T, got t = {t}, T = {settle}"
        )));
    }
    Ok(())
}

/// Numerator and denominator of the `k^2` ratio by nested `n x n` Gauss-Legendre
/// on the triangle `0 <= s1 <= s2 <= t`. `alpha` cancels and is set to one.
fn variance_ratio_terms(t: f64, settle: f64, p: &ModelParams, n: usize) -> (f64, f64) {
    let rule = GaussLegendre::new(n);
    let mut num = 0.0;
    let mut den = 0.0;
    for (s2, w2) in rule.mapped(0.0, t) {
        let var2 = p.inst_variance(settle - s2);
        let mut inner_num = 0.0;
        let mut inner_den = 0.0;
        for (s1, w1) in rule.mapped(0.0, s2) {
            let j = cov_w(s1, s2, p.beta, 1.0);
            inner_num += w1 * p.inst_variance(settle - s1) * j;
            inner_den += w1 * j;
        }
        num += w2 * var2 * inner_num;
        den += w2 * inner_den;
    }
    (num, den)
}

/// `k^2` from the defining double integrals, checked under node doubling.
pub fn k_sq_numeric(t: f64, settle: f64, p: &ModelParams) -> Result<DriftFactorResult> {
    k_sq_numeric_with(t, settle, p, NUMERIC_NODES)
}

pub fn k_sq_numeric_with(t: f64, settle: f64, p: &ModelParams, nodes: usize) -> Result<DriftFactorResult> {
    check_times(t, settle)?;
    if p.alpha == 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    let ratio = |n| {
        let (num, den) = variance_ratio_terms(t, settle, p, n);
        if den > 0.0 {
            Ok(num / den)
        } else {
            Err(Error::DegenerateDenominator)
        }
    };
    let coarse = ratio(nodes)?;
    let fine = ratio(2 * nodes)?;
    let rel_change = (fine - coarse).abs() / fine.abs().max(f64::MIN_POSITIVE);
    if rel_change > NUMERIC_TOLERANCE {
        return Err(Error::QuadratureNonConvergence { rel_change });
    }
    Ok(DriftFactorResult {
        k_sq: fine.max(0.0),
        method: DriftMethod::Numeric,
        t,
        settlement: settle,
    })
}

fn closed_form_degeneracy(t: f64, settle: f64, p: &ModelParams) -> Option<String> {
    let (b, b1, b2) = (p.beta, p.beta1, p.beta2);
    let scale = b.max(b1).max(b2);
    if !(scale > 0.0) {
        return Some("all mean reversion rates vanish".into());
    }
    let combos = [
        ("beta", b),
        ("beta1", b1),
        ("beta2", b2),
        ("beta - 2 beta1", b - 2.0 * b1),
        ("beta - 2 beta2", b - 2.0 * b2),
        ("beta - beta1 - beta2", b - b1 - b2),
    ];
    for (name, value) in combos {
        if value.abs() < DEGENERACY_THRESHOLD * scale {
            return Some(format!("{name} = {value} is too close to zero"));
        }
    }
    if b * t < DEGENERACY_THRESHOLD {
        return Some(format!("beta t = {} is too small", b * t));
    }
    let floor = 1e-12 * p.sigma * p.sigma;
    if p.inst_variance(settle) < floor || p.inst_variance(settle - t) < floor {
        return Some("sigma_F vanishes".into());
    }
    None
}

/// Closed-form `k^2`. Only valid away from the rate degeneracies listed in
/// [`closed_form_degeneracy`]; callers fall back to [`k_sq_numeric`] otherwise.
pub fn k_sq_closed_form(t: f64, settle: f64, p: &ModelParams) -> Result<DriftFactorResult> {
    check_times(t, settle)?;
    if let Some(why) = closed_form_degeneracy(t, settle, p) {
        return Err(Error::DegenerateParameters(why));
    }
    let k_sq = closed_form_terms(t, settle, p);
    if !k_sq.is_finite() || k_sq < 0.0 {
        return Err(Error::DegenerateParameters(format!("closed form evaluated to {k_sq}")));
    }
    Ok(DriftFactorResult {
        k_sq,
        method: DriftMethod::ClosedForm,
        t,
        settlement: settle,
    })
}

#[allow(clippy::many_single_char_names)]
fn closed_form_terms(t: f64, big_t: f64, p: &ModelParams) -> f64 {
    let (s, b, b1, b2, r, rho) = (p.sigma, p.beta, p.beta1, p.beta2, p.loading, p.rho);
    let e = f64::exp;
    let r2 = r * r;
    let (b_2, b_4) = (b * b, b.powi(4));
    let (b1_2, b2_2) = (b1 * b1, b2 * b2);

    let common = (b - 2.0 * b1).powi(2)
        * (b + 2.0 * b1)
        * (b - 2.0 * b2).powi(2)
        * (-b + b1 + b2).powi(2)
        * (b + b1 + b2)
        * (b + 2.0 * b2);

    // Shared by k1 and k2; depends on T only.
    let kd = b_4
        * (e(5.0 * b1 * big_t + 3.0 * b2 * big_t) * r2
            + 2.0 * e(4.0 * (b1 + b2) * big_t) * rho * r
            + e(3.0 * b1 * big_t + 5.0 * b2 * big_t));
    let e_2b1 = e(2.0 * b1 * big_t);
    let e_2b2 = e(2.0 * b2 * big_t);
    let e_b12 = e((b1 + b2) * big_t);
    let ke = e(3.0 * (b1 + b2) * big_t)
        * b_2
        * (b1_2 * (5.0 * e_2b1 * r2 + 8.0 * e_b12 * rho * r + e_2b2)
            + 2.0 * b2 * (e_2b1 * r2 + e_2b2) * b1
            + b2_2 * (e_2b1 * r2 + 8.0 * e_b12 * rho * r + 5.0 * e_2b2));
    let kfa = b1_2 * b2_2 * (e_2b1 * r2 + 8.0 * e_b12 * rho * r + e_2b2);
    let kf = 4.0
        * e(3.0 * (b1 + b2) * big_t)
        * (e_2b1 * r2 * b1.powi(4)
            + 2.0 * b2 * e_2b1 * r2 * b1.powi(3)
            + kfa
            + 2.0 * b2.powi(3) * e_2b2 * b1
            + b2.powi(4) * e_2b2);
    let tail = kd - ke + kf;

    let e1 = e(2.0 * (b1 - b2) * big_t);
    let e2 = e((b1 - b2) * big_t);
    let k1a = b_2 * (e1 * r2 + 2.0 * e2 * rho * r + 1.0);
    let k1b = b * (b2 * (e1 * r2 + 4.0 * e2 * rho * r + 3.0) + b1 * (3.0 * e1 * r2 + 4.0 * e2 * rho * r + 1.0));
    let k1c = 2.0 * (b2_2 + b1 * (e1 * r2 + 4.0 * e2 * rho * r + 1.0) * b2 + b1_2 * e1 * r2);
    let k1 = -2.0 * b * e(-7.0 * b1 * big_t - 5.0 * b2 * big_t) * (k1a - k1b + k1c) * tail / common;

    let ea = e(2.0 * b2 * t + 2.0 * b1 * big_t);
    let eb = e((b1 + b2) * (t + big_t));
    let ec = e(2.0 * b1 * t + 2.0 * b2 * big_t);
    let k2a = (ea * r2 + 2.0 * eb * rho * r + ec) * b_2;
    let k2b = (b2 * (ea * r2 + 4.0 * eb * rho * r + 3.0 * ec) + b1 * (3.0 * ea * r2 + 4.0 * eb * rho * r + ec)) * b;
    let k2c = 2.0 * (ec * b2_2 + b1 * (ea * r2 + 4.0 * eb * rho * r + ec) * b2 + b1_2 * ea * r2);
    let k2 = 2.0 * b * e(-b * t - 7.0 * (b1 + b2) * big_t) * (k2a - k2b + k2c) * tail / common;

    let poly = |sign: f64| {
        (2.0 * rho * rho + 1.0) * b_2
            + sign * 2.0 * (b1 + b2) * (2.0 * rho * rho + 1.0) * b
            + b1_2
            + b2_2
            + 2.0 * b1 * (4.0 * b2 * rho * rho + b2)
    };
    let pair_den = 2.0 * (b - 2.0 * b1).powi(2) * (b - 2.0 * b2).powi(2) * (-b + b1 + b2).powi(2);

    let k3a = e((b1 - b2) * big_t) * r2 + 2.0 * rho * r + e((b2 - b1) * big_t);
    let k3b = (b - 2.0 * b1).powi(2) * (-b + b1 + b2).powi(2) * e(-4.0 * b2 * big_t) * r2 * r2
        + 4.0 * (b - 2.0 * b1).powi(2) * (b - 2.0 * b2) * (b - b1 - b2) * e(-(b1 + 3.0 * b2) * big_t) * rho * r2 * r
        + 2.0 * (b - 2.0 * b1) * (b - 2.0 * b2) * e(-2.0 * (b1 + b2) * big_t) * poly(-1.0) * r2
        + 4.0 * (b - 2.0 * b1) * (b - 2.0 * b2).powi(2) * (b - b1 - b2) * e(-(3.0 * b1 + b2) * big_t) * rho * r
        + (b - 2.0 * b2).powi(2) * (-b + b1 + b2).powi(2) * e(-4.0 * b1 * big_t);
    let k3 = e((b2 - b1) * big_t) * k3a * k3b
        / (pair_den * (r2 + 2.0 * e((b2 - b1) * big_t) * rho * r + e(2.0 * (b2 - b1) * big_t)));

    let k4a = e((b1 - b2) * (big_t - t)) * r2 + 2.0 * rho * r + e((b1 - b2) * (t - big_t));
    let k4b =
        (b - 2.0 * b1).powi(2) * (-b + b1 + b2).powi(2) * e(-2.0 * b1 * t + 2.0 * b2 * t - 4.0 * b2 * big_t) * r2 * r2
            + 4.0
                * (b - 2.0 * b1).powi(2)
                * (b - 2.0 * b2)
                * (b - b1 - b2)
                * e(b2 * (t - 3.0 * big_t) - b1 * (t + big_t))
                * rho
                * r2
                * r
            + 2.0 * (b - 2.0 * b1) * (b - 2.0 * b2) * e(-2.0 * (b1 + b2) * big_t) * r2 * poly(-1.0)
            + 4.0
                * (b - 2.0 * b1)
                * (b - 2.0 * b2).powi(2)
                * (b - b1 - b2)
                * e(b1 * (t - 3.0 * big_t) - b2 * (t + big_t))
                * rho
                * r
            + (b - 2.0 * b2).powi(2) * (-b + b1 + b2).powi(2) * e(2.0 * b1 * t - 2.0 * b2 * t - 4.0 * b1 * big_t);
    let k4 = -e(-2.0 * b * t + 3.0 * b1 * t + b2 * t - b1 * big_t + b2 * big_t) * k4a * k4b
        / (pair_den * (r2 + 2.0 * e((b1 - b2) * (t - big_t)) * rho * r + e(2.0 * (b1 - b2) * (t - big_t))));

    // k5 and k6 share their rate polynomials.
    let g =
        4.0 * b1 * (b + 2.0 * b1) * b2 * (b1 + b2) * (b + b1 + b2) * (3.0 * b1 + b2) * (b + 2.0 * b2) * (b1 + 3.0 * b2);
    let quart = b1 * (b + 2.0 * b1) * (b1 + b2) * (b + b1 + b2) * (3.0 * b1 + b2) * (b1 + 3.0 * b2);
    let cubic = 8.0 * b1 * (b + 2.0 * b1) * b2 * (b1 + b2) * (3.0 * b1 + b2) * (2.0 * b + b1 + 3.0 * b2);
    let square = 4.0 * b1 * b2 * (3.0 * b1 + b2) * (b1 + 3.0 * b2);
    let linear = 8.0 * b1 * b2 * (b1 + b2) * (2.0 * b + 3.0 * b1 + b2) * (b + 2.0 * b2) * (b1 + 3.0 * b2);
    let constant = b2 * (b1 + b2) * (b + b1 + b2) * (3.0 * b1 + b2) * (b + 2.0 * b2) * (b1 + 3.0 * b2);

    let k5a = e((b2 - b1) * big_t) * (e((b1 - b2) * big_t) * r2 + 2.0 * rho * r + e((b2 - b1) * big_t));
    let k5_sum = quart * e(-4.0 * b2 * big_t) * r2 * r2
        + cubic * e(-(b1 + 3.0 * b2) * big_t) * rho * r2 * r
        + square * e(-2.0 * (b1 + b2) * big_t) * poly(1.0) * r2
        + linear * e(-(3.0 * b1 + b2) * big_t) * rho * r
        + constant * e(-4.0 * b1 * big_t);
    let k5h = r2 + 2.0 * e((b2 - b1) * big_t) * rho * r + e(2.0 * (b2 - b1) * big_t);
    let k5 = -k5a * k5_sum / (g * k5h);

    let k6a = e(3.0 * b1 * t + b2 * t - b1 * big_t + b2 * big_t)
        * (e((b1 - b2) * (big_t - t)) * r2 + 2.0 * rho * r + e((b1 - b2) * (t - big_t)));
    let k6_sum = quart * e(-2.0 * b1 * t + 2.0 * b2 * t - 4.0 * b2 * big_t) * r2 * r2
        + cubic * e(b2 * (t - 3.0 * big_t) - b1 * (t + big_t)) * rho * r2 * r
        + square * e(-2.0 * (b1 + b2) * big_t) * r2 * poly(1.0)
        + linear * e(b1 * (t - 3.0 * big_t) - b2 * (t + big_t)) * rho * r
        + constant * e(2.0 * b1 * t - 2.0 * b2 * t - 4.0 * b1 * big_t);
    let k6i = r2 + 2.0 * e((b1 - b2) * (t - big_t)) * rho * r + e(2.0 * (b1 - b2) * (t - big_t));
    let k6 = k6a * k6_sum / (g * k6i);

    let ebt = e(b * t);
    let prefactor = 2.0 * s.powi(4) * b_2 * ebt * ebt / (ebt * ebt * (2.0 * b * t - 3.0) + 4.0 * ebt - 1.0);
    prefactor * (k1 + k2 + k3 + k4 + k5 + k6)
}

/// Parameter sets the closed form is checked on before it is trusted.
fn self_check_cases() -> Vec<(f64, f64, ModelParams)> {
    let base = crate::presets::fig1();
    vec![
        (1.0, 1.0, base),
        (0.5, 2.0, base),
        (
            1.0,
            2.0,
            ModelParams {
                beta: 1.3,
                beta1: 0.2,
                beta2: 0.9,
                loading: 0.8,
                rho: 0.4,
                ..base
            },
        ),
        (
            2.0,
            3.0,
            ModelParams {
                beta: 0.3,
                beta1: 0.4,
                beta2: 2.0,
                loading: -0.6,
                rho: -0.5,
                ..base
            },
        ),
        (
            0.25,
            0.5,
            ModelParams {
                beta: 2.5,
                beta1: 0.05,
                beta2: 1.7,
                loading: 1.2,
                rho: 0.1,
                ..base
            },
        ),
    ]
}

/// Whether the closed form passed its equivalence check against the
/// quadrature. Evaluated once per process.
pub fn closed_form_verified() -> bool {
    static VERIFIED: OnceLock<bool> = OnceLock::new();
    *VERIFIED.get_or_init(|| {
        self_check_cases().into_iter().all(|(t, settle, p)| {
            match (k_sq_closed_form(t, settle, &p), k_sq_numeric(t, settle, &p)) {
                (Ok(cf), Ok(num)) => (cf.k_sq - num.k_sq).abs() <= CLOSED_FORM_TOLERANCE * num.k_sq.abs(),
                _ => false,
            }
        })
    })
}

/// `k^2` at `(t, T)`: fallback for `alpha = 0` or `t = 0`, the closed form
/// when it is verified and non-degenerate, the quadrature otherwise.
pub fn k_factor(t: f64, settle: f64, p: &ModelParams) -> Result<DriftFactorResult> {
    if !(t >= 0.0 && t <= settle && settle.is_finite()) {
        return Err(Error::Domain(format!(
            "drift factor needs 0 <= t <= T, got t = {t}, T = {settle}"
        )));
    }
    if t == 0.0 || p.alpha == 0.0 {
        let k = if t == 0.0 {
            p.inst_variance(settle)
        } else {
            p.integrated_variance_unchecked(0.0, t, settle) / t
        };
        return Ok(DriftFactorResult {
            k_sq: k * k,
            method: DriftMethod::Fallback,
            t,
            settlement: settle,
        });
    }
    if closed_form_verified() {
        if let Ok(res) = k_sq_closed_form(t, settle, p) {
            return Ok(res);
        }
    }
    k_sq_numeric(t, settle, p)
}

/// `k^2` on a set of observation times for one settlement.
pub fn k_table(times: &[f64], settle: f64, p: &ModelParams) -> Result<Vec<DriftFactorResult>> {
    times.iter().map(|&t| k_factor(t, settle, p)).collect()
}
