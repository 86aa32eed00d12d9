//! Factor Monte Carlo for the forward curve.
//!
//! Each path carries the factor state `(u1, u2, v, int_0^t w ds)`; forwards for
//! any settlement are rebuilt from it on demand:
//!
//! ```text
//! ln F(t,T)/F(0,T) = -I(t,T)/2 + sigma (e^{-beta1 T} u1 + R e^{-beta2 T} u2)
//! ```
//!
//! `I(t,T) = int_0^t v sigma_F^2(s,T) ds` is either carried per settlement
//! ([`DriftMode::ExactPerT`]) or approximated by
//! `int_0^t sigma_F^2 ds + k(t,T) int_0^t w ds` ([`DriftMode::Approximate`]).

mod engine;
mod payoff;
mod rng;
mod state;
mod study;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use engine::{paired_forwards, price_payoff, ForwardPair, McEstimate, TimeGrid, BLOCK_SIZE};
pub use payoff::{Fixing, PayoffSpec};
pub use state::{Observation, PathState};
pub use study::{drift_error_study, DriftStudy, DriftStudyRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriftMode {
    #[serde(rename = "exact_per_T")]
    ExactPerT,
    #[serde(rename = "approximate")]
    Approximate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    /// Simulation horizon in years.
    pub horizon: f64,
    pub seed: u64,
    pub drift_mode: DriftMode,
    /// Settlements that carry an exact drift accumulator.
    #[serde(default)]
    pub exact_settlements: Vec<f64>,
    #[serde(default)]
    pub antithetic: bool,
}

impl McConfig {
    /// Approximate drift, no antithetics.
    pub fn new(n_paths: usize, n_steps: usize, horizon: f64, seed: u64) -> Self {
        Self {
            n_paths,
            n_steps,
            horizon,
            seed,
            drift_mode: DriftMode::Approximate,
            exact_settlements: Vec::new(),
            antithetic: false,
        }
    }

    pub fn exact(mut self, settlements: Vec<f64>) -> Self {
        self.drift_mode = DriftMode::ExactPerT;
        self.exact_settlements = settlements;
        self
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.n_steps == 0 {
            return Err(Error::InvalidConfig("n_paths and n_steps must be at least 1".into()));
        }
        if self.antithetic && !self.n_paths.is_multiple_of(2) {
            return Err(Error::InvalidConfig(
                "antithetic sampling needs an even path count".into(),
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.drift_mode == DriftMode::ExactPerT && self.exact_settlements.is_empty() {
            return Err(Error::InvalidConfig(
                "exact drift mode needs at least one settlement".into(),
            ));
        }
        if self.exact_settlements.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
            return Err(Error::InvalidConfig("exact settlements must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Independent samples: path pairs under antithetic sampling.
    pub fn n_samples(&self) -> usize {
        if self.antithetic {
            self.n_paths / 2
        } else {
            self.n_paths
        }
    }
}
