//! Black-76 prices and implied volatilities.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VOL_LOWER: f64 = 1e-6;
pub const VOL_UPPER: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Black-76 price with `total_variance = sigma^2 t`.
pub fn black76_price(forward: f64, strike: f64, total_variance: f64, discount: f64, kind: OptionKind) -> f64 {
    let sd = total_variance.max(0.0).sqrt();
    if sd == 0.0 {
        return discount
            * match kind {
                OptionKind::Call => (forward - strike).max(0.0),
                OptionKind::Put => (strike - forward).max(0.0),
            };
    }
    let d1 = (forward / strike).ln() / sd + 0.5 * sd;
    let d2 = d1 - sd;
    discount
        * match kind {
            OptionKind::Call => forward * norm_cdf(d1) - strike * norm_cdf(d2),
            OptionKind::Put => strike * norm_cdf(-d2) - forward * norm_cdf(-d1),
        }
}

/// `d price / d sigma` for annualized `vol` and expiry `t`.
pub fn black76_vega(forward: f64, strike: f64, vol: f64, expiry: f64, discount: f64) -> f64 {
    let sd = vol * expiry.sqrt();
    if sd <= 0.0 {
        return 0.0;
    }
    let d1 = (forward / strike).ln() / sd + 0.5 * sd;
    discount * forward * norm_pdf(d1) * expiry.sqrt()
}

/// No-arbitrage bounds `(lower, upper)` of a discounted price.
pub fn price_bounds(forward: f64, strike: f64, discount: f64, kind: OptionKind) -> (f64, f64) {
    match kind {
        OptionKind::Call => (discount * (forward - strike).max(0.0), discount * forward),
        OptionKind::Put => (discount * (strike - forward).max(0.0), discount * strike),
    }
}

/// Annualized Black-76 volatility reproducing `price`: safeguarded Newton
/// with bisection fallback inside `[1e-6, 10]`.
pub fn implied_vol(price: f64, forward: f64, strike: f64, expiry: f64, discount: f64, kind: OptionKind) -> Result<f64> {
    if !(forward > 0.0 && strike > 0.0 && expiry > 0.0 && discount > 0.0) {
        return Err(Error::Domain(format!(
            "implied vol needs positive F, K, t_e, D (got {forward}, {strike}, {expiry}, {discount})"
        )));
    }
    let (lower, upper) = price_bounds(forward, strike, discount, kind);
    let slack = 1e-14 * discount * forward.max(strike);
    if !(price >= lower - slack && price <= upper + slack) {
        return Err(Error::NoArbitrageViolation { price, lower, upper });
    }
    if price <= lower {
        return Ok(0.0);
    }
    let target = price;
    let f = |vol: f64| black76_price(forward, strike, vol * vol * expiry, discount, kind) - target;

    let mut lo = VOL_LOWER;
    let mut hi = VOL_UPPER;
    if f(lo) >= 0.0 {
        // Time value below what 1e-6 vol produces; solve on [0, 1e-6].
        lo = 0.0;
        hi = VOL_LOWER;
    } else if f(hi) < 0.0 {
        return Err(Error::VolBracketExceeded { price });
    }

    // Start from the Brenner-Subrahmanyam ATM estimate, kept inside the bracket.
    let mut vol = ((2.0 * PI / expiry).sqrt() * (price - lower) / (discount * forward)).clamp(lo, hi);
    if !(vol > lo && vol < hi) {
        vol = 0.5 * (lo + hi);
    }
    let tol = 1e-15 * discount * forward.max(strike);
    for _ in 0..200 {
        let diff = f(vol);
        if diff.abs() <= tol {
            return Ok(vol);
        }
        if diff > 0.0 {
            hi = vol;
        } else {
            lo = vol;
        }
        let vega = black76_vega(forward, strike, vol, expiry, discount);
        let newton = vol - diff / vega;
        vol = if vega > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(vol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_variance_is_intrinsic() {
        assert_eq!(black76_price(1.2, 1.0, 0.0, 0.9, OptionKind::Call), 0.9 * (1.2 - 1.0));
        assert_eq!(black76_price(0.8, 1.0, 0.0, 1.0, OptionKind::Call), 0.0);
    }

    #[test]
    fn atm_value() {
        // 2 F (N(0.1) - 1/2) with N(0.1) = 0.539827837277029
        let v = black76_price(1.0, 1.0, 0.04, 1.0, OptionKind::Call);
        assert_relative_eq!(v, 2.0 * (0.539_827_837_277_029 - 0.5), max_relative = 1e-12);
        assert!((v - 0.0797).abs() < 1e-4);
    }

    #[test]
    fn parity() {
        for k in [0.5, 0.9, 1.0, 1.3, 2.5] {
            let c = black76_price(1.1, k, 0.09, 0.95, OptionKind::Call);
            let p = black76_price(1.1, k, 0.09, 0.95, OptionKind::Put);
            assert!((c - p - 0.95 * (1.1 - k)).abs() < 1e-15);
        }
    }

    #[test]
    fn lower_bound_gives_zero_vol() {
        let v = implied_vol(0.9 * (1.2 - 1.0), 1.2, 1.0, 1.0, 0.9, OptionKind::Call).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn above_upper_bound_rejected() {
        let r = implied_vol(1.01, 1.0, 1.0, 1.0, 1.0, OptionKind::Call);
        assert!(matches!(r, Err(Error::NoArbitrageViolation { .. })));
    }

    #[test]
    fn tiny_vol_round_trip() {
        let price = black76_price(1.0, 1.0, 1e-14, 1.0, OptionKind::Call);
        let v = implied_vol(price, 1.0, 1.0, 1.0, 1.0, OptionKind::Call).unwrap();
        assert_relative_eq!(v, 1e-7, max_relative = 1e-6);
    }

    proptest! {
        #[test]
        fn round_trip(vol in 0.05..1.5f64, moneyness in -0.5..0.5f64, t in 0.1..5.0f64, put in any::<bool>()) {
            let kind = if put { OptionKind::Put } else { OptionKind::Call };
            let f = 1.0;
            let k = f * (moneyness * vol * t.sqrt()).exp();
            let price = black76_price(f, k, vol * vol * t, 0.97, kind);
            let back = implied_vol(price, f, k, t, 0.97, kind).unwrap();
            let again = black76_price(f, k, back * back * t, 0.97, kind);
            prop_assert!((again - price).abs() <= 1e-10 * price.max(1e-300) + 1e-16);
            prop_assert!((back - vol).abs() <= 1e-8);
        }
    }
}
