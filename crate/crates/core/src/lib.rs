//! Two-factor commodity forward curve model with one-factor Heston-type
//! stochastic volatility.
//!
//! Forward prices follow
//!
//! ```text
//! dF(t,T)/F(t,T) = sqrt(v) * sigma * (exp(-beta1 (T-t)) dz1 + R exp(-beta2 (T-t)) dz2)
//! dv             = beta (1 - v) dt + alpha sqrt(v) dz3,      v(0) = 1
//! ```
//!
//! The crate provides
//!
//! * [`model`]: parameters, the deterministic instantaneous variance and its
//!   closed-form time integral, correlation checks;
//! * [`charfn`]: the characteristic function of the log-forward at expiry,
//!   from a fixed-step RK4 integration of its Riccati ODE pair;
//! * [`fourier`] and [`black76`]: semi-analytic vanilla and early-exercise
//!   pricing and Black-76 implied volatilities;
//! * [`drift`]: the variance-matched drift factor `k(t,T)` used by the
//!   factor Monte Carlo;
//! * [`mc`]: the factor Monte Carlo engine (exact per-settlement drift or the
//!   `k(t,T)` approximation);
//! * [`calibration`]: least-squares fitting to implied volatility quotes.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod black76;
pub mod calibration;
pub mod charfn;
pub mod correlation;
pub mod curves;
pub mod drift;
mod error;
pub mod fourier;
pub mod mc;
pub mod model;
mod par;
pub mod presets;
pub mod quadrature;

pub use black76::{black76_price, implied_vol, OptionKind};
pub use correlation::{factorize_correlation, CorrelationFactorization};
pub use curves::MarketCurves;
pub use error::{Error, ParamReport, ParamViolation, Result};
pub use fourier::{OptionSpec, QuadratureConfig};
pub use model::{integrated_variance, sigma_f_sq, validate_params, ModelParams};
