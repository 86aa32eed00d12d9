//! Initial forward curve `F(0,T)` and discount curve `D(T)`.
//!
//! Both curves interpolate linearly in `T` on the logarithm of the quoted
//! value and extrapolate flat beyond their first and last pillars. An empty
//! discount curve means no discounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurves", into = "RawCurves")]
pub struct MarketCurves {
    forwards: Vec<(f64, f64)>,
    discounts: Vec<(f64, f64)>,
    log_forwards: Vec<f64>,
    log_discounts: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawCurves {
    forwards: Vec<(f64, f64)>,
    #[serde(default)]
    discounts: Vec<(f64, f64)>,
}

impl TryFrom<RawCurves> for MarketCurves {
    type Error = Error;

    fn try_from(raw: RawCurves) -> Result<Self> {
        MarketCurves::new(raw.forwards, raw.discounts)
    }
}

impl From<MarketCurves> for RawCurves {
    fn from(c: MarketCurves) -> Self {
        RawCurves {
            forwards: c.forwards,
            discounts: c.discounts,
        }
    }
}

fn check_pillars(name: &str, pts: &[(f64, f64)]) -> Result<()> {
    for w in pts.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::InvalidCurves(format!(
                "{name} settlement times must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
    }
    if pts.iter().any(|&(t, _)| !t.is_finite() || t < 0.0) {
        return Err(Error::InvalidCurves(format!("{name} times must be finite and >= 0")));
    }
    Ok(())
}

impl MarketCurves {
    pub fn new(forwards: Vec<(f64, f64)>, discounts: Vec<(f64, f64)>) -> Result<Self> {
        if forwards.is_empty() {
            return Err(Error::InvalidCurves("forward curve has no points".into()));
        }
        check_pillars("forward", &forwards)?;
        check_pillars("discount", &discounts)?;
        if let Some(&(t, f)) = forwards.iter().find(|&&(_, f)| !(f > 0.0 && f.is_finite())) {
            return Err(Error::InvalidCurves(format!(
                "forward at T = {t} must be positive, got {f}"
            )));
        }
        if let Some(&(t, d)) = discounts.iter().find(|&&(_, d)| !(d > 0.0 && d <= 1.0)) {
            return Err(Error::InvalidCurves(format!(
                "discount factor at T = {t} must lie in (0, 1], got {d}"
            )));
        }
        let log_forwards = forwards.iter().map(|&(_, f)| f.ln()).collect();
        let log_discounts = discounts.iter().map(|&(_, d)| d.ln()).collect();
        Ok(Self {
            forwards,
            discounts,
            log_forwards,
            log_discounts,
        })
    }

    /// A flat forward curve at `forward` with a flat discount factor.
    pub fn flat(forward: f64, discount: f64) -> Result<Self> {
        Self::new(vec![(0.0, forward)], vec![(0.0, discount)])
    }

    pub fn forwards(&self) -> &[(f64, f64)] {
        &self.forwards
    }

    pub fn discounts(&self) -> &[(f64, f64)] {
        &self.discounts
    }

    /// `F(0, T)`.
    pub fn forward(&self, settle: f64) -> f64 {
        interp_log(&self.forwards, &self.log_forwards, settle)
    }

    /// `D(T)`.
    pub fn discount(&self, settle: f64) -> f64 {
        if self.discounts.is_empty() {
            1.0
        } else {
            interp_log(&self.discounts, &self.log_discounts, settle)
        }
    }
}

fn interp_log(pts: &[(f64, f64)], logs: &[f64], t: f64) -> f64 {
    let n = pts.len();
    if t <= pts[0].0 {
        return pts[0].1;
    }
    if t >= pts[n - 1].0 {
        return pts[n - 1].1;
    }
    let hi = pts.partition_point(|&(ti, _)| ti <= t);
    let lo = hi - 1;
    let (t0, t1) = (pts[lo].0, pts[hi].0);
    let w = (t - t0) / (t1 - t0);
    (logs[lo] + w * (logs[hi] - logs[lo])).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_linear_interpolation_and_flat_extrapolation() {
        let c = MarketCurves::new(vec![(1.0, 50.0), (2.0, 60.0)], vec![(1.0, 0.95), (3.0, 0.85)]).unwrap();
        assert_eq!(c.forward(0.5), 50.0);
        assert_eq!(c.forward(5.0), 60.0);
        assert_relative_eq!(c.forward(1.5), (50.0f64 * 60.0).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(c.discount(2.0), (0.95f64 * 0.85).sqrt(), max_relative = 1e-14);
        assert_eq!(c.discount(10.0), 0.85);
    }

    #[test]
    fn pillars_are_reproduced() {
        let c = MarketCurves::new(vec![(0.5, 3.0), (1.0, 3.2), (2.0, 2.9)], vec![]).unwrap();
        assert_relative_eq!(c.forward(1.0), 3.2, max_relative = 1e-15);
        assert_eq!(c.discount(1.0), 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(MarketCurves::new(vec![], vec![]).is_err());
        assert!(MarketCurves::new(vec![(1.0, -1.0)], vec![]).is_err());
        assert!(MarketCurves::new(vec![(1.0, 1.0), (1.0, 2.0)], vec![]).is_err());
        assert!(MarketCurves::new(vec![(1.0, 1.0)], vec![(1.0, 1.2)]).is_err());
        assert!(MarketCurves::new(vec![(1.0, 1.0)], vec![(1.0, 0.0)]).is_err());
    }

    #[test]
    fn json_shape() {
        let c: MarketCurves =
            serde_json::from_str(r#"{"forwards":[[0.5,1.0],[2.0,1.1]],"discounts":[[1.0,0.97]]}"#).unwrap();
        assert_eq!(c.forwards().len(), 2);
        assert_eq!(c.discount(1.0), 0.97);
        let bad = serde_json::from_str::<MarketCurves>(r#"{"forwards":[[1.0,-2.0]]}"#);
        assert!(bad.is_err());
        let back = serde_json::to_string(&c).unwrap();
        assert_eq!(back, r#"{"forwards":[[0.5,1.0],[2.0,1.1]],"discounts":[[1.0,0.97]]}"#);
    }
}
