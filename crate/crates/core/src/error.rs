use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single violated parameter invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamViolation {
    #[error("sigma must be positive and finite, got {0}")]
    NonPositiveSigma(f64),
    #[error("{name} must be a non-negative rate, got {value}")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("{name} must lie in [-1, 1], got {value}")]
    CorrelationOutOfRange { name: &'static str, value: f64 },
    #[error("correlation matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    CorrelationMatrixNotPsd { min_eigenvalue: f64 },
    #[error("{0} must be finite")]
    NonFinite(&'static str),
}

/// Every invariant a [`crate::ModelParams`] value failed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamReport(pub Vec<ParamViolation>);

impl ParamReport {
    pub fn violations(&self) -> &[ParamViolation] {
        &self.0
    }

    pub fn contains(&self, pred: impl Fn(&ParamViolation) -> bool) -> bool {
        self.0.iter().any(pred)
    }
}

impl fmt::Display for ParamReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(ParamReport),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid market curves: {0}")]
    InvalidCurves(String),
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("Riccati integration blew up (|B| = {magnitude:.3e} at theta = {theta}, tau = {tau})")]
    NonConvergence { theta: f64, tau: f64, magnitude: f64 },
    #[error("Fourier integral not converged: last panel contributes {contribution:.3e} (tolerance {tolerance:.3e})")]
    QuadratureTail { contribution: f64, tolerance: f64 },
    #[error("price {price} outside no-arbitrage bounds [{lower}, {upper}]")]
    NoArbitrageViolation { price: f64, lower: f64, upper: f64 },
    #[error("implied volatility above the solver bracket for price {price}")]
    VolBracketExceeded { price: f64 },
    #[error("drift factor denominator vanishes (alpha = 0 or t = 0)")]
    DegenerateDenominator,
    #[error("closed-form drift factor unusable: {0}")]
    DegenerateParameters(String),
    #[error("quadrature did not converge: relative change {rel_change:.3e} under node doubling")]
    QuadratureNonConvergence { rel_change: f64 },
    #[error("settlement {0} is not tracked by the exact-drift simulation")]
    MissingSettlement(f64),
}

impl Error {
    /// True for failures of a numerical method, as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::QuadratureTail { .. }
                | Error::VolBracketExceeded { .. }
                | Error::DegenerateDenominator
                | Error::DegenerateParameters(_)
                | Error::QuadratureNonConvergence { .. }
        )
    }
}
