//! Paired comparison of exact and approximated drifts.
//!
//! Every path is reconstructed both ways from the same factor state, so the
//! two estimates share all their normals. Option prices are estimated from put
//! payoffs and converted with parity against the known `F(0,T)`, which keeps
//! forward sampling noise out of the implied vols.

use serde::{Deserialize, Serialize};

use crate::black76::black76_vega;
use crate::curves::MarketCurves;
use crate::error::Result;
use crate::fourier::otm_implied_vol;
use crate::model::ModelParams;
use crate::presets;

use super::engine::{Plan, TimeGrid};
use super::McConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftStudy {
    pub expiry: f64,
    pub settlement: f64,
    /// OTM strike as a multiple of `F(0,T)`.
    pub otm_moneyness: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
}

impl DriftStudy {
    pub fn sec5(seed: u64) -> Self {
        Self {
            expiry: presets::SEC5_EXPIRY,
            settlement: presets::SEC5_SETTLEMENT,
            otm_moneyness: presets::SEC5_OTM_MONEYNESS,
            n_paths: presets::SEC5_PATHS,
            n_steps: presets::SEC5_STEPS,
            seed,
            antithetic: false,
        }
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig::new(self.n_paths, self.n_steps, self.expiry, self.seed)
            .exact(vec![self.settlement])
            .with_antithetic(self.antithetic)
    }
}

/// Approximate minus exact, per vol of vol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftStudyRow {
    pub alpha: f64,
    pub fwd_err_bp: f64,
    pub fwd_stderr_bp: f64,
    pub atm_vol_err_pct: f64,
    pub atm_vol_stderr_pct: f64,
    pub otm_vol_err_pct: f64,
    pub otm_vol_stderr_pct: f64,
}

const F_EXACT: usize = 0;
const F_DIFF: usize = 1;
const ATM_EXACT: usize = 2;
const ATM_APPROX: usize = 3;
const OTM_EXACT: usize = 4;
const OTM_APPROX: usize = 5;

pub fn drift_error_study(
    alphas: &[f64],
    study: &DriftStudy,
    curves: &MarketCurves,
    p_base: &ModelParams,
) -> Result<Vec<DriftStudyRow>> {
    let cfg = study.mc_config();
    cfg.validate()?;
    let (te, settle) = (study.expiry, study.settlement);
    crate::fourier::OptionSpec::early_exercise(te, settle, 1.0, crate::OptionKind::Call).validate()?;
    let grid = TimeGrid::uniform(te, study.n_steps, &[te])?;
    let forward = curves.forward(settle);
    let discount = curves.discount(settle);
    let atm = forward;
    let otm = study.otm_moneyness * forward;

    alphas
        .iter()
        .map(|&alpha| {
            let p = p_base.with_alpha(alpha);
            let plan = Plan::new(&grid, &[(te, settle)], &[settle], curves, &p, true)?;
            let m = plan.simulate(&cfg, 6, |obs, out| {
                let (fe, fa) = (obs[0].exact, obs[0].approximate);
                out[F_EXACT] = fe;
                out[F_DIFF] = fa - fe;
                out[ATM_EXACT] = discount * (atm - fe).max(0.0);
                out[ATM_APPROX] = discount * (atm - fa).max(0.0);
                out[OTM_EXACT] = discount * (otm - fe).max(0.0);
                out[OTM_APPROX] = discount * (otm - fa).max(0.0);
            });
            let vol = |put: f64, strike: f64| {
                otm_implied_vol(put + discount * (forward - strike), forward, strike, te, discount)
            };
            let vol_stderr =
                |vol: f64, strike: f64, se: f64| 100.0 * se / black76_vega(forward, strike, vol, te, discount);

            let atm_exact = vol(m[ATM_EXACT].mean, atm)?;
            let atm_approx = vol(m[ATM_APPROX].mean, atm)?;
            let otm_exact = vol(m[OTM_EXACT].mean, otm)?;
            let otm_approx = vol(m[OTM_APPROX].mean, otm)?;
            Ok(DriftStudyRow {
                alpha,
                fwd_err_bp: 1e4 * m[F_DIFF].mean / forward,
                fwd_stderr_bp: 1e4 * m[F_EXACT].std_error() / forward,
                atm_vol_err_pct: 100.0 * (atm_approx - atm_exact),
                atm_vol_stderr_pct: vol_stderr(atm_exact, atm, m[ATM_EXACT].std_error()),
                otm_vol_err_pct: 100.0 * (otm_approx - otm_exact),
                otm_vol_stderr_pct: vol_stderr(otm_exact, otm, m[OTM_EXACT].std_error()),
            })
        })
        .collect()
}
