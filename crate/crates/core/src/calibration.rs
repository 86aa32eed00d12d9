//! Weighted least-squares fit of the model to implied volatility quotes.
//!
//! The search runs Nelder-Mead in an unconstrained space: logarithms for
//! positive parameters, `atanh` for correlations, identity for `R`. Points
//! whose correlations are jointly indefinite are projected back onto the PSD
//! cone before evaluation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::correlation::repair_correlation;
use crate::curves::MarketCurves;
use crate::error::{Error, Result};
use crate::fourier::{CharFnGrid, QuadratureConfig};
use crate::model::{validate_params, ModelParams};
use crate::par;

/// Objective contribution of a quote the model cannot price.
pub const FAILED_QUOTE_PENALTY: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolQuote {
    pub t_e: f64,
    #[serde(rename = "T")]
    pub settlement: f64,
    #[serde(rename = "K")]
    pub strike: f64,
    #[serde(rename = "vol")]
    pub market_vol: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl VolQuote {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t_e > 0.0
            && self.t_e <= self.settlement
            && self.settlement.is_finite()
            && self.strike > 0.0
            && self.strike.is_finite()
            && self.market_vol > 0.0
            && self.market_vol.is_finite()
            && self.weight >= 0.0
            && self.weight.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidOption(format!("invalid quote {self:?}")))
        }
    }
}

/// Model implied vols for `quotes`, one charfn grid per `(t_e, T)`.
/// A quote that cannot be priced gets `None`.
pub fn model_vols(
    p: &ModelParams,
    quotes: &[VolQuote],
    curves: &MarketCurves,
    q: &QuadratureConfig,
) -> Vec<Option<f64>> {
    let mut groups: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (i, quote) in quotes.iter().enumerate() {
        groups
            .entry((quote.t_e.to_bits(), quote.settlement.to_bits()))
            .or_default()
            .push(i);
    }
    let mut out = vec![None; quotes.len()];
    for ((te, settle), idx) in groups {
        let (te, settle) = (f64::from_bits(te), f64::from_bits(settle));
        let Ok(grid) = CharFnGrid::build(te, settle, p, q) else {
            continue;
        };
        let forward = curves.forward(settle);
        let discount = curves.discount(settle);
        for i in idx {
            out[i] = grid
                .implied_vol(forward, quotes[i].strike, discount, q)
                .ok()
                .map(|(_, v)| v);
        }
    }
    out
}

/// `sum w_i (model_vol_i - market_vol_i)^2`; unpriceable quotes cost
/// [`FAILED_QUOTE_PENALTY`] each.
pub fn objective(p: &ModelParams, quotes: &[VolQuote], curves: &MarketCurves, q: &QuadratureConfig) -> f64 {
    if validate_params(*p).is_err() {
        return FAILED_QUOTE_PENALTY * quotes.len() as f64;
    }
    model_vols(p, quotes, curves, q)
        .iter()
        .zip(quotes)
        .map(|(model, quote)| match model {
            _ if quote.weight == 0.0 => 0.0,
            Some(v) => quote.weight * (v - quote.market_vol).powi(2),
            None => FAILED_QUOTE_PENALTY,
        })
        .sum()
}

/// Box constraints in the natural parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lower: ModelParams,
    pub upper: ModelParams,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            lower: ModelParams {
                sigma: 1e-4,
                beta1: 0.0,
                beta2: 0.0,
                loading: -10.0,
                rho: -1.0,
                beta: 0.0,
                alpha: 0.0,
                rho1: -1.0,
                rho2: -1.0,
            },
            upper: ModelParams {
                sigma: 10.0,
                beta1: 50.0,
                beta2: 50.0,
                loading: 10.0,
                rho: 1.0,
                beta: 50.0,
                alpha: 20.0,
                rho1: 1.0,
                rho2: 1.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transform {
    Log,
    Atanh,
    Identity,
}

/// Parameter order used by masks and the search space.
pub const PARAM_NAMES: [&str; 9] = ["sigma", "beta1", "beta2", "R", "rho", "beta", "alpha", "rho1", "rho2"];
const TRANSFORMS: [Transform; 9] = [
    Transform::Log,
    Transform::Log,
    Transform::Log,
    Transform::Identity,
    Transform::Atanh,
    Transform::Log,
    Transform::Log,
    Transform::Atanh,
    Transform::Atanh,
];

fn to_array(p: &ModelParams) -> [f64; 9] {
    [
        p.sigma, p.beta1, p.beta2, p.loading, p.rho, p.beta, p.alpha, p.rho1, p.rho2,
    ]
}

fn from_array(a: [f64; 9]) -> ModelParams {
    ModelParams {
        sigma: a[0],
        beta1: a[1],
        beta2: a[2],
        loading: a[3],
        rho: a[4],
        beta: a[5],
        alpha: a[6],
        rho1: a[7],
        rho2: a[8],
    }
}

fn forward_transform(t: Transform, x: f64) -> f64 {
    match t {
        Transform::Log => x.max(1e-8).ln(),
        Transform::Atanh => x.clamp(-1.0 + 1e-9, 1.0 - 1e-9).atanh(),
        Transform::Identity => x,
    }
}

fn inverse_transform(t: Transform, y: f64) -> f64 {
    match t {
        Transform::Log => y.exp(),
        Transform::Atanh => y.tanh(),
        Transform::Identity => y,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Maximum objective evaluations.
    pub budget: usize,
    /// Parameters the search may move, in [`PARAM_NAMES`] order.
    pub free: [bool; 9],
    pub bounds: ParamBounds,
    /// Stop as soon as the objective reaches this value.
    pub target: f64,
    /// Stop when the simplex objective spread falls below this.
    pub f_tolerance: f64,
    /// ... and its extent in the search space falls below this.
    pub x_tolerance: f64,
    /// Initial simplex step in the search space.
    pub initial_step: f64,
    /// Optional `lambda * |y - y0|^2` pull toward the start point.
    pub regularization: f64,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            budget: 2000,
            free: [true; 9],
            bounds: ParamBounds::default(),
            target: 1e-12,
            f_tolerance: 1e-12,
            x_tolerance: 1e-7,
            initial_step: 0.2,
            regularization: 0.0,
            quadrature: QuadratureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: ModelParams,
    pub objective: f64,
    pub n_evals: usize,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
}

struct Search<'a> {
    quotes: &'a [VolQuote],
    curves: &'a MarketCurves,
    opts: &'a FitOptions,
    initial: [f64; 9],
    free_idx: Vec<usize>,
    y0: Vec<f64>,
}

impl Search<'_> {
    /// Natural parameters for a search point: bounds, then PSD repair.
    fn params(&self, y: &[f64]) -> ModelParams {
        let mut a = self.initial;
        let lo = to_array(&self.opts.bounds.lower);
        let hi = to_array(&self.opts.bounds.upper);
        for (&i, &yi) in self.free_idx.iter().zip(y) {
            a[i] = inverse_transform(TRANSFORMS[i], yi).clamp(lo[i], hi[i]);
        }
        let mut p = from_array(a);
        if validate_params(p).is_err() {
            let fixed = repair_correlation(&p.correlation_matrix());
            p.rho = fixed[0][1];
            p.rho1 = fixed[0][2];
            p.rho2 = fixed[1][2];
        }
        p
    }

    fn value(&self, y: &[f64]) -> (f64, ModelParams) {
        let p = self.params(y);
        let mut f = objective(&p, self.quotes, self.curves, &self.opts.quadrature);
        if self.opts.regularization > 0.0 {
            f += self.opts.regularization * y.iter().zip(&self.y0).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        (f, p)
    }
}

struct Vertex {
    y: Vec<f64>,
    f: f64,
    p: ModelParams,
}

/// Nelder-Mead fit from `initial`. The result holds the best point seen,
/// which is never worse than `initial`.
pub fn fit(
    quotes: &[VolQuote],
    initial: &ModelParams,
    curves: &MarketCurves,
    opts: &FitOptions,
) -> Result<CalibrationResult> {
    if quotes.is_empty() {
        return Err(Error::InvalidConfig("calibration needs at least one quote".into()));
    }
    quotes.iter().try_for_each(VolQuote::validate)?;
    opts.quadrature.validate()?;
    let initial = validate_params(*initial)?;
    if opts.budget == 0 {
        return Err(Error::InvalidConfig("evaluation budget must be at least 1".into()));
    }
    let (lo, hi, x0) = (
        to_array(&opts.bounds.lower),
        to_array(&opts.bounds.upper),
        to_array(&initial),
    );
    if (0..9).any(|i| !(lo[i] <= x0[i] && x0[i] <= hi[i])) {
        return Err(Error::InvalidConfig("initial parameters lie outside the bounds".into()));
    }

    let free_idx: Vec<usize> = (0..9).filter(|&i| opts.free[i]).collect();
    let y0: Vec<f64> = free_idx
        .iter()
        .map(|&i| forward_transform(TRANSFORMS[i], x0[i]))
        .collect();
    let search = Search {
        quotes,
        curves,
        opts,
        initial: x0,
        free_idx,
        y0: y0.clone(),
    };

    let mut n_evals = 1;
    let f0 = objective(&initial, quotes, curves, &opts.quadrature);
    let mut best = (f0, initial);
    let result = |best: (f64, ModelParams), n_evals, iterations, stop_reason| CalibrationResult {
        params: best.1,
        objective: best.0,
        n_evals,
        iterations,
        converged: stop_reason == StopReason::Converged,
        stop_reason,
    };
    if f0 <= opts.target || search.free_idx.is_empty() {
        return Ok(result(best, n_evals, 0, StopReason::Converged));
    }
    if opts.budget == 1 {
        return Ok(result(best, n_evals, 0, StopReason::BudgetExhausted));
    }

    let n = y0.len();
    let room = opts.budget - n_evals;
    let starts: Vec<Vec<f64>> = (0..n.min(room))
        .map(|j| {
            let mut y = y0.clone();
            y[j] += opts.initial_step;
            y
        })
        .collect();
    let mut simplex = vec![Vertex {
        y: y0,
        f: f0,
        p: initial,
    }];
    for (y, (f, p)) in starts
        .iter()
        .cloned()
        .zip(par::map_collect(&starts, |y| search.value(y)))
    {
        simplex.push(Vertex { y, f, p });
    }
    n_evals += starts.len();
    let track = |best: &mut (f64, ModelParams), v: &Vertex| {
        if v.f < best.0 {
            *best = (v.f, v.p);
        }
    };
    simplex.iter().for_each(|v| track(&mut best, v));
    if simplex.len() < n + 1 {
        return Ok(result(best, n_evals, 0, StopReason::BudgetExhausted));
    }

    let mut iterations = 0;
    loop {
        // stable sort keeps ties in insertion order
        simplex.sort_by(|a, b| a.f.total_cmp(&b.f));
        if best.0 <= opts.target {
            return Ok(result(best, n_evals, iterations, StopReason::Converged));
        }
        let spread = simplex[n].f - simplex[0].f;
        let extent = simplex[1..]
            .iter()
            .flat_map(|v| v.y.iter().zip(&simplex[0].y).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.f_tolerance * (1.0 + simplex[0].f.abs()) && extent <= opts.x_tolerance {
            return Ok(result(best, n_evals, iterations, StopReason::Converged));
        }
        if n_evals >= opts.budget {
            return Ok(result(best, n_evals, iterations, StopReason::BudgetExhausted));
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v.y[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|j| centroid[j] + t * (simplex[n].y[j] - centroid[j]))
                .collect()
        };
        let mut eval = |y: Vec<f64>, n_evals: &mut usize| {
            *n_evals += 1;
            let (f, p) = search.value(&y);
            let v = Vertex { y, f, p };
            track(&mut best, &v);
            v
        };

        let reflected = eval(along(-1.0), &mut n_evals);
        if reflected.f < simplex[0].f {
            if n_evals < opts.budget {
                let expanded = eval(along(-2.0), &mut n_evals);
                simplex[n] = if expanded.f < reflected.f { expanded } else { reflected };
            } else {
                simplex[n] = reflected;
            }
            continue;
        }
        if reflected.f < simplex[n - 1].f {
            simplex[n] = reflected;
            continue;
        }
        if n_evals >= opts.budget {
            continue;
        }
        let (contracted, accept) = if reflected.f < simplex[n].f {
            let c = eval(along(-0.5), &mut n_evals);
            let ok = c.f <= reflected.f;
            (c, ok)
        } else {
            let c = eval(along(0.5), &mut n_evals);
            let ok = c.f < simplex[n].f;
            (c, ok)
        };
        if accept {
            simplex[n] = contracted;
            continue;
        }
        // shrink toward the best vertex
        let room = opts.budget.saturating_sub(n_evals).min(n);
        let targets: Vec<Vec<f64>> = simplex[1..=room]
            .iter()
            .map(|v| v.y.iter().zip(&simplex[0].y).map(|(a, b)| b + 0.5 * (a - b)).collect())
            .collect();
        let values = par::map_collect(&targets, |y| search.value(y));
        n_evals += targets.len();
        for (slot, (y, (f, p))) in simplex[1..=room].iter_mut().zip(targets.into_iter().zip(values)) {
            *slot = Vertex { y, f, p };
            track(&mut best, slot);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn curves() -> MarketCurves {
        MarketCurves::flat(1.0, 1.0).unwrap()
    }

    fn synthetic(p: &ModelParams) -> Vec<VolQuote> {
        let mut quotes = Vec::new();
        for te in [0.5, 1.0, 2.0] {
            for k in [0.8, 1.0, 1.25] {
                quotes.push(VolQuote {
                    t_e: te,
                    settlement: te,
                    strike: k,
                    market_vol: 0.0,
                    weight: 1.0,
                });
            }
        }
        let vols = model_vols(p, &quotes, &curves(), &QuadratureConfig::default());
        for (q, v) in quotes.iter_mut().zip(vols) {
            q.market_vol = v.unwrap();
        }
        quotes
    }

    #[test]
    fn self_fit_objective_vanishes() {
        let p = presets::fig1();
        let quotes = synthetic(&p);
        assert!(objective(&p, &quotes, &curves(), &QuadratureConfig::default()) <= 1e-10);
    }

    #[test]
    fn zero_weight_quote_costs_nothing() {
        let q = VolQuote {
            t_e: 1.0,
            settlement: 1.0,
            strike: 1.0,
            market_vol: 0.9,
            weight: 0.0,
        };
        assert_eq!(
            objective(&presets::fig1(), &[q], &curves(), &QuadratureConfig::default()),
            0.0
        );
    }

    #[test]
    fn perturbed_sigma_increases_objective() {
        let p = presets::fig1();
        let quotes = synthetic(&p);
        let qc = QuadratureConfig::default();
        let base = objective(&p, &quotes, &curves(), &qc);
        let bumped = objective(
            &ModelParams {
                sigma: p.sigma + 0.05,
                ..p
            },
            &quotes,
            &curves(),
            &qc,
        );
        assert!(bumped >= base + 1e-4);
    }

    #[test]
    fn failing_quote_is_penalized() {
        let q = QuadratureConfig {
            theta_max: 20.0,
            ..QuadratureConfig::default()
        };
        let quote = VolQuote {
            t_e: 0.01,
            settlement: 0.01,
            strike: 1.0,
            market_vol: 0.4,
            weight: 1.0,
        };
        assert_eq!(
            objective(&presets::fig1(), &[quote], &curves(), &q),
            FAILED_QUOTE_PENALTY
        );
    }

    #[test]
    fn start_at_truth_converges_immediately() {
        let p = presets::fig1();
        let r = fit(&synthetic(&p), &p, &curves(), &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.stop_reason, StopReason::Converged);
        assert!(r.objective <= 1e-10);
        assert_eq!(r.params, p);
        assert!(r.iterations <= 3);
    }

    #[test]
    fn budget_of_one_returns_initial() {
        let truth = presets::fig1();
        let start = ModelParams { sigma: 0.5, ..truth };
        let opts = FitOptions {
            budget: 1,
            ..FitOptions::default()
        };
        let r = fit(&synthetic(&truth), &start, &curves(), &opts).unwrap();
        assert_eq!(r.stop_reason, StopReason::BudgetExhausted);
        assert!(!r.converged);
        assert_eq!(r.params, start);
        assert_eq!(r.n_evals, 1);
    }

    #[test]
    fn short_fit_improves_and_stays_valid() {
        let truth = presets::fig1();
        let quotes = synthetic(&truth);
        let start = ModelParams {
            sigma: 0.48,
            alpha: 0.8,
            rho: -0.1,
            ..truth
        };
        let opts = FitOptions {
            budget: 150,
            ..FitOptions::default()
        };
        let f0 = objective(&start, &quotes, &curves(), &opts.quadrature);
        let r = fit(&quotes, &start, &curves(), &opts).unwrap();
        assert!(r.objective <= f0);
        assert!(r.n_evals <= 150);
        assert!(validate_params(r.params).is_ok());
        let again = fit(&quotes, &start, &curves(), &opts).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn fixed_parameters_stay_put() {
        let truth = presets::fig1();
        let start = ModelParams { sigma: 0.45, ..truth };
        let mut free = [false; 9];
        free[0] = true;
        let opts = FitOptions {
            budget: 60,
            free,
            ..FitOptions::default()
        };
        let r = fit(&synthetic(&truth), &start, &curves(), &opts).unwrap();
        assert_eq!(
            ModelParams {
                sigma: truth.sigma,
                ..r.params
            },
            truth
        );
        assert!((r.params.sigma - truth.sigma).abs() < 1e-3);
    }

    #[test]
    fn quote_json_shape() {
        let q: Vec<VolQuote> = serde_json::from_str(r#"[{"t_e":1.0,"T":1.5,"K":1.1,"vol":0.3,"weight":2.0}]"#).unwrap();
        assert_eq!(q[0].settlement, 1.5);
        assert_eq!(q[0].weight, 2.0);
        assert!(fit(&[], &presets::fig1(), &curves(), &FitOptions::default()).is_err());
    }

    #[test]
    fn psd_repair_yields_valid_params() {
        let quotes = synthetic(&presets::fig1());
        let opts = FitOptions::default();
        let s = Search {
            quotes: &quotes,
            curves: &curves(),
            opts: &opts,
            initial: to_array(&presets::fig1()),
            free_idx: vec![4, 7, 8],
            y0: vec![0.0; 3],
        };
        let p = s.params(&[(0.99f64).atanh(), (0.99f64).atanh(), (-0.99f64).atanh()]);
        assert!(validate_params(p).is_ok());
    }
}
