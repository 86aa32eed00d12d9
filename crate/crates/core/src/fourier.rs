//! European vanilla (`t_e = T`) and early-exercise (`t_e < T`) options by
//! Fourier inversion of the characteristic function:
//!
//! ```text
//! C(K) = D(T) (F - K/2 - K/pi int_0^inf Re[f(theta) e^{-i theta ln(K/F)} / (theta^2 + i theta)] dtheta)
//! ```
//!
//! The theta integral uses composite Gauss-Legendre panels on `[0, theta_max]`.
//! Panels stop once `|f|` has decayed below `cutoff` on a whole panel; if the
//! last panel is reached instead, its contribution must be below
//! `tail_tolerance` (relative to the forward).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::black76::{implied_vol, OptionKind};
use crate::charfn::{ode_steps, RiccatiSchedule};
use crate::curves::MarketCurves;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::par;
use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    /// Expiry `t_e`, years.
    pub expiry: f64,
    /// Settlement `T` of the underlying forward, years.
    pub settlement: f64,
    pub strike: f64,
    pub kind: OptionKind,
}

impl OptionSpec {
    pub fn vanilla(expiry: f64, strike: f64, kind: OptionKind) -> Self {
        Self {
            expiry,
            settlement: expiry,
            strike,
            kind,
        }
    }

    pub fn early_exercise(expiry: f64, settlement: f64, strike: f64, kind: OptionKind) -> Self {
        Self {
            expiry,
            settlement,
            strike,
            kind,
        }
    }

    pub fn is_vanilla(&self) -> bool {
        self.expiry == self.settlement
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.expiry > 0.0 && self.expiry <= self.settlement && self.settlement.is_finite()) {
            return Err(Error::InvalidOption(format!(
                "need 0 < t_e <= T, got t_e = {}, T = {}",
                self.expiry, self.settlement
            )));
        }
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(Error::InvalidOption(format!(
                "strike must be positive, got {}",
                self.strike
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    /// Truncation of the theta integral.
    pub theta_max: f64,
    /// Width of each Gauss-Legendre panel in theta.
    pub panel_width: f64,
    /// Gauss-Legendre nodes per panel.
    pub n_nodes: usize,
    /// Largest admissible last-panel contribution, relative to the forward.
    pub tail_tolerance: f64,
    /// Panels stop once `|f(theta)|` is below this across a whole panel.
    pub cutoff: f64,
    pub ode_steps_per_year: f64,
    pub min_ode_steps: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            theta_max: 200.0,
            panel_width: 10.0,
            n_nodes: 64,
            tail_tolerance: 1e-10,
            cutoff: 1e-15,
            ode_steps_per_year: 200.0,
            min_ode_steps: 50,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_max > 0.0 && self.panel_width > 0.0) {
            return Err(Error::InvalidConfig(
                "theta_max and panel_width must be positive".into(),
            ));
        }
        if self.n_nodes < 16 {
            return Err(Error::InvalidConfig(format!(
                "need at least 16 nodes per panel, got {}",
                self.n_nodes
            )));
        }
        if !(self.ode_steps_per_year > 0.0) {
            return Err(Error::InvalidConfig("ode_steps_per_year must be positive".into()));
        }
        Ok(())
    }

    pub fn ode_steps(&self, expiry: f64) -> usize {
        ode_steps(expiry, self.ode_steps_per_year, self.min_ode_steps)
    }
}

/// A price together with how the theta integral went.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourierPrice {
    pub price: f64,
    /// Upper end of the last theta panel evaluated.
    pub theta_reached: f64,
    pub nodes_used: usize,
    /// `K/pi * |last panel integral|`, relative to the forward.
    pub last_panel: f64,
    pub ode_steps: usize,
}

/// Characteristic function sampled at the quadrature nodes for one
/// `(t_e, T)`. Strike-independent, so one grid prices a whole smile.
#[derive(Debug, Clone)]
pub struct CharFnGrid {
    expiry: f64,
    settlement: f64,
    panel_len: usize,
    thetas: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<Complex64>,
    decayed: bool,
    theta_reached: f64,
    ode_steps: usize,
}

impl CharFnGrid {
    pub fn build(expiry: f64, settlement: f64, p: &ModelParams, q: &QuadratureConfig) -> Result<Self> {
        q.validate()?;
        let n_steps = q.ode_steps(expiry);
        let schedule = RiccatiSchedule::new(expiry, settlement, p, n_steps)?;
        let rule = GaussLegendre::new(q.n_nodes);
        let n_panels = (q.theta_max / q.panel_width).ceil() as usize;

        let mut grid = Self {
            expiry,
            settlement,
            panel_len: q.n_nodes,
            thetas: Vec::with_capacity(n_panels * q.n_nodes),
            weights: Vec::with_capacity(n_panels * q.n_nodes),
            values: Vec::with_capacity(n_panels * q.n_nodes),
            decayed: false,
            theta_reached: 0.0,
            ode_steps: n_steps,
        };
        for k in 0..n_panels {
            let a = k as f64 * q.panel_width;
            let b = (a + q.panel_width).min(q.theta_max);
            let nodes: Vec<(f64, f64)> = rule.mapped(a, b).collect();
            let values = par::map_collect(&nodes, |&(theta, _)| {
                schedule.integrate(theta).map(|pt| (pt.a + pt.b * p.v0()).exp())
            });
            let mut panel_max = 0.0f64;
            for (&(theta, w), f) in nodes.iter().zip(values) {
                let f = f?;
                panel_max = panel_max.max(f.norm());
                grid.thetas.push(theta);
                grid.weights.push(w);
                grid.values.push(f);
            }
            grid.theta_reached = b;
            if panel_max < q.cutoff {
                grid.decayed = true;
                break;
            }
        }
        Ok(grid)
    }

    pub fn expiry(&self) -> f64 {
        self.expiry
    }

    pub fn settlement(&self) -> f64 {
        self.settlement
    }

    /// Nodes and values of the sampled characteristic function.
    pub fn samples(&self) -> impl Iterator<Item = (f64, Complex64)> + '_ {
        self.thetas.iter().copied().zip(self.values.iter().copied())
    }

    /// Discounted call price, clamped to the no-arbitrage range.
    pub fn call_price(&self, forward: f64, strike: f64, discount: f64, q: &QuadratureConfig) -> Result<FourierPrice> {
        let log_m = (strike / forward).ln();
        let mut total = 0.0;
        let mut last = 0.0;
        for (panel, chunk) in self.thetas.chunks(self.panel_len).enumerate() {
            let start = panel * self.panel_len;
            let mut sum = 0.0;
            for (j, &theta) in chunk.iter().enumerate() {
                let f = self.values[start + j];
                let phase = Complex64::from_polar(1.0, -theta * log_m);
                let denom = Complex64::new(theta * theta, theta);
                sum += self.weights[start + j] * (f * phase / denom).re;
            }
            total += sum;
            last = sum;
        }
        let last_panel = strike / PI * last.abs() / forward;
        if !self.decayed && last_panel > q.tail_tolerance {
            return Err(Error::QuadratureTail {
                contribution: last_panel,
                tolerance: q.tail_tolerance,
            });
        }
        let raw = discount * (forward - 0.5 * strike - strike / PI * total);
        let lower = discount * (forward - strike).max(0.0);
        let upper = discount * forward;
        Ok(FourierPrice {
            price: raw.clamp(lower, upper),
            theta_reached: self.theta_reached,
            nodes_used: self.thetas.len(),
            last_panel,
            ode_steps: self.ode_steps,
        })
    }

    /// Implied vol at `strike`, inverted from the out-of-the-money side.
    pub fn implied_vol(&self, forward: f64, strike: f64, discount: f64, q: &QuadratureConfig) -> Result<(f64, f64)> {
        let call = self.call_price(forward, strike, discount, q)?.price;
        let vol = otm_implied_vol(call, forward, strike, self.expiry, discount)?;
        Ok((call, vol))
    }
}

/// Implied vol from a call price, inverting whichever of call/put is out of the money.
pub(crate) fn otm_implied_vol(call: f64, forward: f64, strike: f64, expiry: f64, discount: f64) -> Result<f64> {
    if strike >= forward {
        implied_vol(call, forward, strike, expiry, discount, OptionKind::Call)
    } else {
        let put = (call - discount * (forward - strike)).max(0.0);
        implied_vol(put, forward, strike, expiry, discount, OptionKind::Put)
    }
}

/// Price with quadrature diagnostics, for either option kind.
pub fn price(spec: &OptionSpec, curves: &MarketCurves, p: &ModelParams, q: &QuadratureConfig) -> Result<FourierPrice> {
    spec.validate()?;
    let forward = curves.forward(spec.settlement);
    let discount = curves.discount(spec.settlement);
    let grid = CharFnGrid::build(spec.expiry, spec.settlement, p, q)?;
    let mut out = grid.call_price(forward, spec.strike, discount, q)?;
    if spec.kind == OptionKind::Put {
        out.price -= discount * (forward - spec.strike);
    }
    Ok(out)
}

pub fn call_price(spec: &OptionSpec, curves: &MarketCurves, p: &ModelParams, q: &QuadratureConfig) -> Result<f64> {
    if spec.kind != OptionKind::Call {
        return Err(Error::InvalidOption("call_price needs a call".into()));
    }
    Ok(price(spec, curves, p, q)?.price)
}

/// Put from put/call parity: `P = C - D(T) (F - K)`.
pub fn put_price(spec: &OptionSpec, curves: &MarketCurves, p: &ModelParams, q: &QuadratureConfig) -> Result<f64> {
    if spec.kind != OptionKind::Put {
        return Err(Error::InvalidOption("put_price needs a put".into()));
    }
    Ok(price(spec, curves, p, q)?.price)
}

/// One row of a term structure or smile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolPoint {
    pub expiry: f64,
    pub settlement: f64,
    pub strike: f64,
    /// Discounted call price.
    pub price: f64,
    pub implied_vol: f64,
}

/// ATM-forward implied vols of vanilla options (`T = t_e`).
pub fn atm_term_structure(
    expiries: &[f64],
    curves: &MarketCurves,
    p: &ModelParams,
    q: &QuadratureConfig,
) -> Result<Vec<VolPoint>> {
    if expiries.iter().any(|&t| !(t > 0.0)) || expiries.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidOption(
            "expiries must be positive and strictly increasing".into(),
        ));
    }
    expiries
        .iter()
        .map(|&te| {
            let forward = curves.forward(te);
            let discount = curves.discount(te);
            let grid = CharFnGrid::build(te, te, p, q)?;
            let (price, implied_vol) = grid.implied_vol(forward, forward, discount, q)?;
            Ok(VolPoint {
                expiry: te,
                settlement: te,
                strike: forward,
                price,
                implied_vol,
            })
        })
        .collect()
}

/// Implied vols across strikes at a fixed `(t_e, T)`.
pub fn smile_slice(
    strikes: &[f64],
    expiry: f64,
    settlement: f64,
    curves: &MarketCurves,
    p: &ModelParams,
    q: &QuadratureConfig,
) -> Result<Vec<VolPoint>> {
    if strikes.iter().any(|&k| !(k > 0.0 && k.is_finite())) {
        return Err(Error::InvalidOption("strikes must be positive".into()));
    }
    OptionSpec::early_exercise(expiry, settlement, 1.0, OptionKind::Call).validate()?;
    let forward = curves.forward(settlement);
    let discount = curves.discount(settlement);
    let grid = CharFnGrid::build(expiry, settlement, p, q)?;
    strikes
        .iter()
        .map(|&k| {
            let (price, implied_vol) = grid.implied_vol(forward, k, discount, q)?;
            Ok(VolPoint {
                expiry,
                settlement,
                strike: k,
                price,
                implied_vol,
            })
        })
        .collect()
}
