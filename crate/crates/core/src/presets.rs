//! The two canonical parameter sets.

use crate::model::ModelParams;

/// Term-structure and smile example: sigma 0.4, beta1 0.1, beta2 1, R 0.5,
/// rho -0.3, beta 0.5, alpha 1, rho1 = rho2 = 0.3.
pub fn fig1() -> ModelParams {
    ModelParams {
        sigma: 0.4,
        beta1: 0.1,
        beta2: 1.0,
        loading: 0.5,
        rho: -0.3,
        beta: 0.5,
        alpha: 1.0,
        rho1: 0.3,
        rho2: 0.3,
    }
}

/// Drift-approximation stress test: strong Samuelson term structure and no
/// variance mean reversion. `alpha` is swept by the study; 1 here.
pub fn sec5() -> ModelParams {
    ModelParams {
        sigma: 0.6,
        beta1: 0.01,
        beta2: 1.0,
        loading: 0.5,
        rho: -0.3,
        beta: 0.0,
        alpha: 1.0,
        rho1: 0.3,
        rho2: 0.3,
    }
}

/// Option expiry used by the drift study.
pub const SEC5_EXPIRY: f64 = 1.0;
/// Settlement of the forward underlying the drift study.
pub const SEC5_SETTLEMENT: f64 = 2.0;
/// Out-of-the-money strike as a multiple of the forward.
pub const SEC5_OTM_MONEYNESS: f64 = 1.4;
pub const SEC5_STEPS: usize = 100;
pub const SEC5_PATHS: usize = 100_000;
pub const SEC5_ALPHAS: [f64; 7] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
