//! Path generation, block-parallel accumulation, and payoff pricing.

use serde::Serialize;

use crate::correlation::{factorize_correlation, CorrelationFactorization};
use crate::curves::MarketCurves;
use crate::error::{Error, Result};
use crate::model::{validate_params, ModelParams};
use crate::par;

use super::payoff::PayoffSpec;
use super::rng::PathRng;
use super::state::{Observation, PathState, Step};
use super::{DriftMode, McConfig};

/// Samples per work block. Blocks are merged in index order, so results do
/// not depend on how blocks are scheduled.
pub const BLOCK_SIZE: usize = 1024;

/// Simulation times: uniform on `[0, horizon]` plus any required times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, n_steps: usize, required: &[f64]) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || n_steps == 0 {
            return Err(Error::InvalidConfig(
                "time grid needs horizon > 0 and at least one step".into(),
            ));
        }
        let h = horizon / n_steps as f64;
        let mut times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * h).collect();
        times[n_steps] = horizon;
        for &t in required {
            if !(t >= 0.0 && t <= horizon) {
                return Err(Error::InvalidConfig(format!(
                    "required time {t} outside [0, {horizon}]"
                )));
            }
            let i = nearest(&times, t);
            if (times[i] - t).abs() > 1e-9 * h {
                times.insert(times.partition_point(|&s| s < t), t);
            }
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Index of the node closest to `t`.
    pub fn snap(&self, t: f64) -> usize {
        nearest(&self.times, t)
    }
}

fn nearest(times: &[f64], t: f64) -> usize {
    let hi = times.partition_point(|&s| s < t).min(times.len() - 1);
    if hi > 0 && (t - times[hi - 1]).abs() <= (times[hi] - t).abs() {
        hi - 1
    } else {
        hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Moments {
    pub(crate) n: u64,
    pub(crate) mean: f64,
    m2: f64,
}

impl Moments {
    #[inline]
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub(crate) fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub(crate) fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2.max(0.0) / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

/// Forwards observed at one fixing node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ObservedForward {
    /// NaN when the settlement carries no exact accumulator.
    pub(crate) exact: f64,
    pub(crate) approximate: f64,
}

/// Deterministic inputs shared by all paths.
pub(crate) struct Plan {
    params: ModelParams,
    factor: CorrelationFactorization,
    settlements: Vec<f64>,
    steps: Vec<Step>,
    /// `(node, observation)`, nodes ascending.
    observations: Vec<(usize, Observation)>,
}

impl Plan {
    /// `fixings` are `(time, settlement)`; `need_k` controls whether the
    /// drift factor is computed for each observation.
    pub(crate) fn new(
        grid: &TimeGrid,
        fixings: &[(f64, f64)],
        settlements: &[f64],
        curves: &MarketCurves,
        p: &ModelParams,
        need_k: bool,
    ) -> Result<Self> {
        let params = validate_params(*p)?;
        let factor = factorize_correlation(&params)?;
        let times = grid.times();
        let steps = times
            .windows(2)
            .map(|w| Step::new(w[0], w[1] - w[0], &params, settlements))
            .collect();
        let template = PathState::new(&params, settlements);
        let mut observations = Vec::with_capacity(fixings.len());
        for &(t, settle) in fixings {
            let node = grid.snap(t);
            let t_node = times[node];
            if settle < t_node {
                return Err(Error::InvalidOption(format!(
                    "fixing snapped to {t_node} is after its settlement {settle}"
                )));
            }
            let slot = template.slot(settle);
            let obs = if need_k {
                Observation::new(t_node, settle, curves, &params, slot)?
            } else {
                Observation::without_k(t_node, settle, curves, &params, slot)?
            };
            observations.push((node, obs));
        }
        if observations.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::InvalidOption("fixings must be in time order".into()));
        }
        Ok(Self {
            params,
            factor,
            settlements: settlements.to_vec(),
            steps,
            observations,
        })
    }

    fn observe(&self, from: usize, node: usize, state: &PathState, out: &mut Vec<ObservedForward>) -> usize {
        let mut j = from;
        while j < self.observations.len() && self.observations[j].0 == node {
            let obs = &self.observations[j].1;
            out.push(ObservedForward {
                exact: obs.exact(state).unwrap_or(f64::NAN),
                approximate: obs.approximate(state),
            });
            j += 1;
        }
        j
    }

    /// Simulates `cfg.n_samples()` samples; `eval` maps one path's observed
    /// forwards to `n_out` outputs. Antithetic pairs are averaged.
    pub(crate) fn simulate<F>(&self, cfg: &McConfig, n_out: usize, eval: F) -> Vec<Moments>
    where
        F: Fn(&[ObservedForward], &mut [f64]) + Sync + Send,
    {
        let n_samples = cfg.n_samples();
        let n_blocks = n_samples.div_ceil(BLOCK_SIZE);
        let blocks = par::map_range(n_blocks, |b| {
            let start = b * BLOCK_SIZE;
            let end = (start + BLOCK_SIZE).min(n_samples);
            self.run_block(cfg, start, end, n_out, &eval)
        });
        let mut total = vec![Moments::default(); n_out];
        for block in &blocks {
            for (t, m) in total.iter_mut().zip(block) {
                t.merge(m);
            }
        }
        total
    }

    fn run_block<F>(&self, cfg: &McConfig, start: usize, end: usize, n_out: usize, eval: &F) -> Vec<Moments>
    where
        F: Fn(&[ObservedForward], &mut [f64]),
    {
        let legs = if cfg.antithetic { 2 } else { 1 };
        let mut moments = vec![Moments::default(); n_out];
        let mut work = Workspace::new(self, legs);
        let mut outputs = vec![vec![0.0; n_out]; legs];
        for sample in start..end {
            self.run_sample(cfg.seed, sample as u64, &mut work);
            for (seen, out) in work.seen.iter().zip(outputs.iter_mut()) {
                eval(seen, out);
            }
            for (k, m) in moments.iter_mut().enumerate() {
                let x = if legs == 2 {
                    0.5 * (outputs[0][k] + outputs[1][k])
                } else {
                    outputs[0][k]
                };
                m.push(x);
            }
        }
        moments
    }

    /// Simulates one sample (one path, or an antithetic pair) into `work`.
    fn run_sample(&self, seed: u64, sample: u64, work: &mut Workspace) {
        let legs = work.states.len();
        let mut rng = PathRng::new(seed, sample);
        for leg in 0..legs {
            work.states[leg].clone_from(&work.template);
            work.seen[leg].clear();
        }
        let mut next = 0;
        for leg in 0..legs {
            next = self.observe(0, 0, &work.states[leg], &mut work.seen[leg]);
        }
        for (i, step) in self.steps.iter().enumerate() {
            let z = self.factor.correlate(rng.normals());
            work.states[0].advance(step, z, &self.params);
            if legs == 2 {
                work.states[1].advance(step, [-z[0], -z[1], -z[2]], &self.params);
            }
            if next < self.observations.len() && self.observations[next].0 == i + 1 {
                let from = next;
                for leg in 0..legs {
                    next = self.observe(from, i + 1, &work.states[leg], &mut work.seen[leg]);
                }
            }
        }
    }
}

struct Workspace {
    template: PathState,
    states: Vec<PathState>,
    seen: Vec<Vec<ObservedForward>>,
}

impl Workspace {
    fn new(plan: &Plan, legs: usize) -> Self {
        let template = PathState::new(&plan.params, &plan.settlements);
        Self {
            states: vec![template.clone(); legs],
            seen: vec![Vec::with_capacity(plan.observations.len()); legs],
            template,
        }
    }
}

/// `F(t_e, T)` on one path, rebuilt with both drift treatments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForwardPair {
    pub exact: f64,
    pub approximate: f64,
}

/// Per-path exact and approximate forwards for the first `n_paths` paths of
/// `seed`, antithetic legs included. Both come from the same factor state.
pub fn paired_forwards(
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    expiry: f64,
    settlement: f64,
    curves: &MarketCurves,
    p: &ModelParams,
) -> Result<Vec<ForwardPair>> {
    let cfg = McConfig::new(n_paths, n_steps, expiry, seed).exact(vec![settlement]);
    cfg.validate()?;
    PayoffSpec::Forward { expiry, settlement }.validate(expiry)?;
    let grid = TimeGrid::uniform(expiry, n_steps, &[expiry])?;
    let plan = Plan::new(&grid, &[(expiry, settlement)], &[settlement], curves, p, true)?;
    let mut work = Workspace::new(&plan, 1);
    Ok((0..n_paths as u64)
        .map(|sample| {
            plan.run_sample(seed, sample, &mut work);
            let o = work.seen[0][0];
            ForwardPair {
                exact: o.exact,
                approximate: o.approximate,
            }
        })
        .collect())
}

/// Discounted expected payoff and its standard error.
pub fn price_payoff(payoff: &PayoffSpec, cfg: &McConfig, curves: &MarketCurves, p: &ModelParams) -> Result<McEstimate> {
    cfg.validate()?;
    payoff.validate(cfg.horizon)?;
    let fixings = payoff.fixings();
    let required: Vec<f64> = if payoff.snaps_fixings() {
        Vec::new()
    } else {
        fixings.iter().map(|f| f.time).collect()
    };
    let grid = TimeGrid::uniform(cfg.horizon, cfg.n_steps, &required)?;
    let settlements = match cfg.drift_mode {
        DriftMode::ExactPerT => {
            let tracked = &cfg.exact_settlements;
            if let Some(f) = fixings
                .iter()
                .find(|f| !tracked.iter().any(|&s| (s - f.settlement).abs() <= 1e-12))
            {
                return Err(Error::MissingSettlement(f.settlement));
            }
            tracked.clone()
        }
        DriftMode::Approximate => Vec::new(),
    };
    let pairs: Vec<(f64, f64)> = fixings.iter().map(|f| (f.time, f.settlement)).collect();
    let plan = Plan::new(
        &grid,
        &pairs,
        &settlements,
        curves,
        p,
        cfg.drift_mode == DriftMode::Approximate,
    )?;
    let discount = payoff.discount(curves);
    let mode = cfg.drift_mode;
    let moments = plan.simulate(cfg, 1, |obs, out| {
        let mut fwd = [0.0; 1];
        let mut many;
        let forwards: &[f64] = if obs.len() == 1 {
            fwd[0] = pick(&obs[0], mode);
            &fwd
        } else {
            many = Vec::with_capacity(obs.len());
            many.extend(obs.iter().map(|o| pick(o, mode)));
            &many
        };
        out[0] = discount * payoff.evaluate(forwards);
    });
    Ok(McEstimate {
        value: moments[0].mean,
        std_error: moments[0].std_error(),
        n_paths: cfg.n_paths,
    })
}

#[inline]
fn pick(o: &ObservedForward, mode: DriftMode) -> f64 {
    match mode {
        DriftMode::ExactPerT => o.exact,
        DriftMode::Approximate => o.approximate,
    }
}
