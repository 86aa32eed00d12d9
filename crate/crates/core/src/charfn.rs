//! Characteristic function of the log-forward at option expiry.
//!
//! With `x(t) = ln F(t,T)/F(0,T)` and `tau = t_e - t`, the transform
//! `E[exp(i theta x(t_e))]` has the affine form `exp(i theta x + A(tau) + B(tau) v)`
//! where
//!
//! ```text
//! dA/dtau = beta B
//! dB/dtau = -(theta^2 + i theta)/2 * sigma_F^2(t_e - tau, T) - beta B + alpha^2/2 B^2
//!           + i theta B alpha sigma (rho1 e^{-beta1 (T - t_e + tau)} + R rho2 e^{-beta2 (T - t_e + tau)})
//! ```
//!
//! with `A(0) = B(0) = 0`. No closed form is known because `sigma_F` depends
//! on calendar time, so the pair is integrated with classical RK4.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// `|B|` beyond this aborts the integration.
pub const OVERFLOW_GUARD: f64 = 1e12;

pub const DEFAULT_STEPS_PER_YEAR: f64 = 200.0;
pub const MIN_STEPS: usize = 50;

/// Default RK4 step count for an expiry `t_e` (years).
pub fn default_ode_steps(expiry: f64) -> usize {
    ode_steps(expiry, DEFAULT_STEPS_PER_YEAR, MIN_STEPS)
}

pub(crate) fn ode_steps(expiry: f64, per_year: f64, min_steps: usize) -> usize {
    ((per_year * expiry).ceil() as usize).max(min_steps).max(1)
}

/// Solution of the Riccati pair at one Fourier argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharFnPoint {
    pub theta: f64,
    pub a: Complex64,
    pub b: Complex64,
    pub tau: f64,
}

#[inline]
fn rhs(theta: f64, beta: f64, half_alpha_sq: f64, var: f64, coupling: f64, b: Complex64) -> (Complex64, Complex64) {
    let forcing = Complex64::new(-0.5 * theta * theta * var, -0.5 * theta * var);
    let i_theta_c = Complex64::new(0.0, theta * coupling);
    let db = forcing + b * (i_theta_c - beta + half_alpha_sq * b);
    (beta * b, db)
}

/// `alpha sigma (rho1 e^{-beta1 u} + R rho2 e^{-beta2 u})` at time to settlement `u`.
#[inline]
fn coupling(p: &ModelParams, time_to_settle: f64) -> f64 {
    p.alpha
        * p.sigma
        * (p.rho1 * (-p.beta1 * time_to_settle).exp() + p.loading * p.rho2 * (-p.beta2 * time_to_settle).exp())
}

/// Right-hand side `(dA/dtau, dB/dtau)` of the Riccati pair.
pub fn ode_rhs(
    tau: f64,
    _a: Complex64,
    b: Complex64,
    theta: f64,
    expiry: f64,
    settle: f64,
    p: &ModelParams,
) -> (Complex64, Complex64) {
    let u = settle - expiry + tau;
    rhs(
        theta,
        p.beta,
        0.5 * p.alpha * p.alpha,
        p.inst_variance(u),
        coupling(p, u),
        b,
    )
}

/// The theta-independent coefficients of the Riccati pair, sampled at every
/// RK4 stage time. Built once per `(t_e, T, params)` and shared across theta.
#[derive(Debug, Clone)]
pub struct RiccatiSchedule {
    expiry: f64,
    step: f64,
    beta: f64,
    half_alpha_sq: f64,
    // index 2k is tau = k h, index 2k+1 is tau = (k + 1/2) h
    variance: Vec<f64>,
    coupling: Vec<f64>,
}

impl RiccatiSchedule {
    pub fn new(expiry: f64, settle: f64, p: &ModelParams, n_steps: usize) -> Result<Self> {
        check_times(expiry, settle)?;
        if n_steps == 0 {
            return Err(Error::Domain("RK4 needs at least one step".into()));
        }
        let step = expiry / n_steps as f64;
        let (variance, coupling) = (0..=2 * n_steps)
            .map(|k| {
                let u = settle - expiry + 0.5 * step * k as f64;
                (p.inst_variance(u), coupling(p, u))
            })
            .unzip();
        Ok(Self {
            expiry,
            step,
            beta: p.beta,
            half_alpha_sq: 0.5 * p.alpha * p.alpha,
            variance,
            coupling,
        })
    }

    pub fn n_steps(&self) -> usize {
        (self.variance.len() - 1) / 2
    }

    /// `(A, B)` at `tau = t_e`.
    pub fn integrate(&self, theta: f64) -> Result<CharFnPoint> {
        let mut a = Complex64::new(0.0, 0.0);
        let mut b = Complex64::new(0.0, 0.0);
        let h = self.step;
        let f = |k: usize, b: Complex64| {
            rhs(
                theta,
                self.beta,
                self.half_alpha_sq,
                self.variance[k],
                self.coupling[k],
                b,
            )
        };
        for n in 0..self.n_steps() {
            let (ka1, kb1) = f(2 * n, b);
            let (ka2, kb2) = f(2 * n + 1, b + 0.5 * h * kb1);
            let (ka3, kb3) = f(2 * n + 1, b + 0.5 * h * kb2);
            let (ka4, kb4) = f(2 * n + 2, b + h * kb3);
            a += h / 6.0 * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4);
            b += h / 6.0 * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4);
            let mag = b.norm();
            if !(mag <= OVERFLOW_GUARD) {
                return Err(Error::NonConvergence {
                    theta,
                    tau: h * (n + 1) as f64,
                    magnitude: mag,
                });
            }
        }
        Ok(CharFnPoint {
            theta,
            a,
            b,
            tau: self.expiry,
        })
    }
}

fn check_times(expiry: f64, settle: f64) -> Result<()> {
    if !(expiry >= 0.0 && expiry <= settle && settle.is_finite()) {
        return Err(Error::Domain(format!(
            "characteristic function needs 0 <= t_e <= T, got t_e = {expiry}, T = {settle}"
        )));
    }
    Ok(())
}

/// Integrates the Riccati pair from `tau = 0` to `tau = t_e` with `n_steps`
/// fixed RK4 steps.
pub fn integrate_ab(theta: f64, expiry: f64, settle: f64, p: &ModelParams, n_steps: usize) -> Result<CharFnPoint> {
    RiccatiSchedule::new(expiry, settle, p, n_steps)?.integrate(theta)
}

/// `E[exp(i theta x(t_e))]` given the state `(x, v)` at `t_e - tau` with
/// `tau = t_e`, i.e. seen from today.
pub fn charfn_eval(
    theta: f64,
    x: f64,
    v: f64,
    expiry: f64,
    settle: f64,
    p: &ModelParams,
    n_steps: usize,
) -> Result<Complex64> {
    if !(v >= 0.0) {
        return Err(Error::Domain(format!("variance state must be >= 0, got {v}")));
    }
    let pt = integrate_ab(theta, expiry, settle, p, n_steps)?;
    Ok((Complex64::new(0.0, theta * x) + pt.a + pt.b * v).exp())
}
