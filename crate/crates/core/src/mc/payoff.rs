//! Payoffs priced by the Monte Carlo engine.

use serde::{Deserialize, Serialize};

use crate::black76::OptionKind;
use crate::curves::MarketCurves;
use crate::error::{Error, Result};

/// An observation of `F(time, settlement)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixing {
    pub time: f64,
    pub settlement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayoffSpec {
    /// `F(t_e, T)` itself, undiscounted: its expectation is `F(0,T)`.
    Forward { expiry: f64, settlement: f64 },
    Vanilla {
        expiry: f64,
        strike: f64,
        option: OptionKind,
    },
    EarlyExercise {
        expiry: f64,
        settlement: f64,
        strike: f64,
        option: OptionKind,
    },
    /// Option on the average of prompt forwards, paid at `payment`.
    AsianPrompt {
        fixings: Vec<Fixing>,
        strike: f64,
        option: OptionKind,
        payment: f64,
    },
}

impl PayoffSpec {
    pub fn fixings(&self) -> Vec<Fixing> {
        match self {
            PayoffSpec::Forward { expiry, settlement } | PayoffSpec::EarlyExercise { expiry, settlement, .. } => {
                vec![Fixing {
                    time: *expiry,
                    settlement: *settlement,
                }]
            }
            PayoffSpec::Vanilla { expiry, .. } => vec![Fixing {
                time: *expiry,
                settlement: *expiry,
            }],
            PayoffSpec::AsianPrompt { fixings, .. } => fixings.clone(),
        }
    }

    /// Whether fixings are snapped to the time grid rather than inserted.
    pub(crate) fn snaps_fixings(&self) -> bool {
        matches!(self, PayoffSpec::AsianPrompt { .. })
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        let fixings = self.fixings();
        if fixings.is_empty() {
            return Err(Error::InvalidOption("payoff has no fixings".into()));
        }
        if fixings.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(Error::InvalidOption("fixing times must be ascending".into()));
        }
        for f in &fixings {
            if !(f.time >= 0.0 && f.time <= horizon) {
                return Err(Error::InvalidOption(format!(
                    "fixing at {} lies outside the simulation horizon [0, {horizon}]",
                    f.time
                )));
            }
            if !(f.settlement >= f.time && f.settlement.is_finite()) {
                return Err(Error::InvalidOption(format!(
                    "fixing at {} references settlement {} before it",
                    f.time, f.settlement
                )));
            }
        }
        match self {
            PayoffSpec::Vanilla { strike, .. }
            | PayoffSpec::EarlyExercise { strike, .. }
            | PayoffSpec::AsianPrompt { strike, .. }
                if !(*strike >= 0.0 && strike.is_finite()) =>
            {
                Err(Error::InvalidOption(format!(
                    "strike must be finite and >= 0, got {strike}"
                )))
            }
            PayoffSpec::AsianPrompt { payment, fixings, .. } if !(*payment >= fixings[fixings.len() - 1].time) => {
                Err(Error::InvalidOption("payment precedes the last fixing".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn discount(&self, curves: &MarketCurves) -> f64 {
        match self {
            PayoffSpec::Forward { .. } => 1.0,
            PayoffSpec::Vanilla { expiry, .. } => curves.discount(*expiry),
            PayoffSpec::EarlyExercise { settlement, .. } => curves.discount(*settlement),
            PayoffSpec::AsianPrompt { payment, .. } => curves.discount(*payment),
        }
    }

    /// Undiscounted payoff from the fixed forwards, in fixing order.
    pub fn evaluate(&self, forwards: &[f64]) -> f64 {
        let intrinsic = |kind: OptionKind, f: f64, k: f64| match kind {
            OptionKind::Call => (f - k).max(0.0),
            OptionKind::Put => (k - f).max(0.0),
        };
        match self {
            PayoffSpec::Forward { .. } => forwards[0],
            PayoffSpec::Vanilla { strike, option, .. } | PayoffSpec::EarlyExercise { strike, option, .. } => {
                intrinsic(*option, forwards[0], *strike)
            }
            PayoffSpec::AsianPrompt { strike, option, .. } => {
                let avg = forwards.iter().sum::<f64>() / forwards.len() as f64;
                intrinsic(*option, avg, *strike)
            }
        }
    }
}
