//! Path state, its time step, and forward reconstruction.

use crate::curves::MarketCurves;
use crate::drift::k_factor;
use crate::error::{Error, Result};
use crate::model::ModelParams;

use super::DriftMode;

const SETTLEMENT_MATCH: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub t: f64,
    pub u1: f64,
    pub u2: f64,
    /// Signed Euler value; only `max(v, 0)` enters the dynamics.
    pub v: f64,
    /// `int_0^t (v - 1) ds`.
    pub int_w: f64,
    /// `(T, int_0^t v sigma_F^2(s,T) ds)` per tracked settlement.
    pub exact_drift: Vec<(f64, f64)>,
}

/// Deterministic data of one time step, shared by every path.
#[derive(Debug, Clone)]
pub(crate) struct Step {
    pub(crate) dt: f64,
    pub(crate) sqrt_dt: f64,
    /// `e^{beta_i t}` at the left point.
    pub(crate) growth: [f64; 2],
    /// `int_t^{t+dt} sigma_F^2(s,T) ds` per tracked settlement.
    pub(crate) increments: Vec<f64>,
}

impl Step {
    pub(crate) fn new(t: f64, dt: f64, p: &ModelParams, settlements: &[f64]) -> Self {
        let increments = settlements
            .iter()
            .map(|&settle| {
                let (a, b) = (t.min(settle), (t + dt).min(settle));
                p.integrated_variance_unchecked(a, b, settle)
            })
            .collect();
        Self {
            dt,
            sqrt_dt: dt.sqrt(),
            growth: [(p.beta1 * t).exp(), (p.beta2 * t).exp()],
            increments,
        }
    }
}

impl PathState {
    /// State at `t = 0`, tracking exact drifts for `settlements`.
    pub fn new(p: &ModelParams, settlements: &[f64]) -> Self {
        Self {
            t: 0.0,
            u1: 0.0,
            u2: 0.0,
            v: p.v0(),
            int_w: 0.0,
            exact_drift: settlements.iter().map(|&s| (s, 0.0)).collect(),
        }
    }

    /// One full-truncation Euler step with correlated normals `z`.
    pub fn evolve_step(&mut self, dt: f64, z: [f64; 3], p: &ModelParams) {
        let settlements: Vec<f64> = self.exact_drift.iter().map(|&(s, _)| s).collect();
        let step = Step::new(self.t, dt, p, &settlements);
        self.advance(&step, z, p);
    }

    #[inline]
    pub(crate) fn advance(&mut self, step: &Step, z: [f64; 3], p: &ModelParams) {
        let v = self.v.max(0.0);
        let sv = v.sqrt() * step.sqrt_dt;
        self.u1 += sv * step.growth[0] * z[0];
        self.u2 += sv * step.growth[1] * z[1];
        self.int_w += (v - 1.0) * step.dt;
        for (acc, inc) in self.exact_drift.iter_mut().zip(&step.increments) {
            acc.1 += v * inc;
        }
        self.v += p.beta * (1.0 - v) * step.dt + p.alpha * sv * z[2];
        self.t += step.dt;
    }

    pub(crate) fn slot(&self, settle: f64) -> Option<usize> {
        self.exact_drift
            .iter()
            .position(|&(s, _)| (s - settle).abs() <= SETTLEMENT_MATCH)
    }

    /// `F(t,T)` for the current `t`.
    pub fn forward_reconstruct(
        &self,
        settle: f64,
        curves: &MarketCurves,
        p: &ModelParams,
        mode: DriftMode,
    ) -> Result<f64> {
        let slot = self.slot(settle);
        match mode {
            DriftMode::ExactPerT => {
                let obs = Observation::without_k(self.t, settle, curves, p, slot)?;
                obs.exact(self)
            }
            DriftMode::Approximate => Ok(Observation::new(self.t, settle, curves, p, slot)?.approximate(self)),
        }
    }
}

/// Everything deterministic needed to rebuild `F(t,T)` from a path state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub t: f64,
    pub settlement: f64,
    pub forward0: f64,
    /// `sigma e^{-beta1 T}`, `sigma R e^{-beta2 T}`.
    loadings: [f64; 2],
    /// `int_0^t sigma_F^2(s,T) ds`.
    pub integrated_variance: f64,
    pub k: f64,
    slot: Option<usize>,
}

impl Observation {
    pub fn new(t: f64, settle: f64, curves: &MarketCurves, p: &ModelParams, slot: Option<usize>) -> Result<Self> {
        let mut obs = Self::without_k(t, settle, curves, p, slot)?;
        obs.k = k_factor(t, settle, p)?.k();
        Ok(obs)
    }

    pub(crate) fn without_k(
        t: f64,
        settle: f64,
        curves: &MarketCurves,
        p: &ModelParams,
        slot: Option<usize>,
    ) -> Result<Self> {
        if !(t >= 0.0 && settle >= t && settle.is_finite()) {
            return Err(Error::Domain(format!(
                "cannot observe F(t,T) with t = {t}, T = {settle}"
            )));
        }
        Ok(Self {
            t,
            settlement: settle,
            forward0: curves.forward(settle),
            loadings: [
                p.sigma * (-p.beta1 * settle).exp(),
                p.sigma * p.loading * (-p.beta2 * settle).exp(),
            ],
            integrated_variance: p.integrated_variance_unchecked(0.0, t, settle),
            k: 0.0,
            slot,
        })
    }

    #[inline]
    fn diffusion(&self, s: &PathState) -> f64 {
        self.loadings[0] * s.u1 + self.loadings[1] * s.u2
    }

    /// Forward with the per-settlement drift accumulator.
    #[inline]
    pub fn exact(&self, s: &PathState) -> Result<f64> {
        let slot = self.slot.ok_or(Error::MissingSettlement(self.settlement))?;
        let drift = s.exact_drift[slot].1;
        Ok(self.forward0 * (-0.5 * drift + self.diffusion(s)).exp())
    }

    /// Forward with the `k(t,T)` drift approximation.
    #[inline]
    pub fn approximate(&self, s: &PathState) -> f64 {
        let drift = self.integrated_variance + self.k * s.int_w;
        self.forward0 * (-0.5 * drift + self.diffusion(s)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_relative_eq;

    fn flat() -> MarketCurves {
        MarketCurves::flat(1.0, 1.0).unwrap()
    }

    #[test]
    fn deterministic_variance_without_vol_of_vol() {
        let p = presets::fig1().with_alpha(0.0);
        let mut s = PathState::new(&p, &[]);
        for z in [[0.3, -1.2, 2.0], [1.0, 0.5, -3.0], [-0.7, 0.1, 0.9]] {
            s.evolve_step(0.1, z, &p);
        }
        assert_eq!(s.v, 1.0);
        assert_eq!(s.int_w, 0.0);
    }

    #[test]
    fn zero_normals_leave_factors() {
        let p = presets::fig1();
        let mut s = PathState::new(&p, &[]);
        s.evolve_step(0.25, [0.0; 3], &p);
        assert_eq!((s.u1, s.u2, s.v), (0.0, 0.0, 1.0));
        assert_relative_eq!(s.t, 0.25);
    }

    #[test]
    fn single_step_substitution() {
        let p = presets::fig1();
        let mut s = PathState::new(&p, &[]);
        s.evolve_step(0.01, [1.0, 0.0, 0.0], &p);
        assert_relative_eq!(s.u1, 0.1, max_relative = 1e-15);
        assert_eq!(s.u2, 0.0);
    }

    #[test]
    fn truncation_keeps_dynamics_real() {
        let p = ModelParams {
            alpha: 3.0,
            ..presets::sec5()
        };
        let mut s = PathState::new(&p, &[2.0]);
        s.evolve_step(0.1, [0.0, 0.0, -10.0], &p);
        assert!(s.v < 0.0);
        let before = (s.u1, s.exact_drift[0].1);
        s.evolve_step(0.1, [1.0, 1.0, 1.0], &p);
        // zero effective variance: no diffusion, no drift accumulation, v frozen
        assert_eq!((s.u1, s.exact_drift[0].1), before);
        assert!(s.v < 0.0);
        assert_relative_eq!(s.int_w, 0.0 - 0.1, max_relative = 1e-12);
    }

    #[test]
    fn time_zero_reproduces_curve() {
        let p = presets::fig1();
        let c = MarketCurves::new(vec![(1.0, 2.0), (3.0, 2.5)], vec![]).unwrap();
        let s = PathState::new(&p, &[2.0]);
        for mode in [DriftMode::ExactPerT, DriftMode::Approximate] {
            assert_eq!(s.forward_reconstruct(2.0, &c, &p, mode).unwrap(), c.forward(2.0));
        }
    }

    #[test]
    fn missing_settlement() {
        let p = presets::fig1();
        let s = PathState::new(&p, &[2.0]);
        let r = s.forward_reconstruct(1.5, &flat(), &p, DriftMode::ExactPerT);
        assert!(matches!(r, Err(Error::MissingSettlement(t)) if t == 1.5));
    }

    #[test]
    fn modes_agree_without_vol_of_vol() {
        let p = presets::sec5().with_alpha(0.0);
        let mut s = PathState::new(&p, &[2.0]);
        for i in 0..50 {
            let z = [(i as f64).sin(), (i as f64).cos(), 0.5];
            s.evolve_step(0.02, z, &p);
        }
        let a = s.forward_reconstruct(2.0, &flat(), &p, DriftMode::ExactPerT).unwrap();
        let b = s.forward_reconstruct(2.0, &flat(), &p, DriftMode::Approximate).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-13);
    }

    #[test]
    fn modes_agree_for_flat_sigma_f() {
        let p = ModelParams {
            beta1: 0.0,
            beta2: 0.0,
            alpha: 2.0,
            ..presets::sec5()
        };
        let mut s = PathState::new(&p, &[2.0]);
        for i in 0..50 {
            let z = [(i as f64).sin(), (i as f64).cos(), (0.3 * i as f64).sin() * 2.0];
            s.evolve_step(0.02, z, &p);
        }
        assert!(s.int_w != 0.0);
        let a = s.forward_reconstruct(2.0, &flat(), &p, DriftMode::ExactPerT).unwrap();
        let b = s.forward_reconstruct(2.0, &flat(), &p, DriftMode::Approximate).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-13);
    }
}
