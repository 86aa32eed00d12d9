//! Browser bindings for the interactive demo in `www/`.
//!
//! Every export takes model parameters as a JSON object (the same shape the
//! CLI reads) and returns JSON. Curves are flat at F = 1 with no discounting.

use fcsv_core::drift::k_table;
use fcsv_core::fourier::{atm_term_structure, smile_slice, VolPoint};
use fcsv_core::{presets, validate_params, MarketCurves, ModelParams, QuadratureConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

type Result<T> = std::result::Result<T, String>;

fn params(json: &str) -> Result<ModelParams> {
    let p: ModelParams = serde_json::from_str(json).map_err(|e| format!("bad parameters: {e}"))?;
    validate_params(p).map_err(|e| e.to_string())
}

fn flat() -> MarketCurves {
    MarketCurves::flat(1.0, 1.0).expect("flat unit curves are valid")
}

fn grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return Err(format!(
            "need at least 2 points on an increasing range, got {n} on [{lo}, {hi}]"
        ));
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

fn vol_points(points: &[VolPoint]) -> Value {
    points
        .iter()
        .map(|v| json!({ "t_e": v.expiry, "T": v.settlement, "K": v.strike, "vol": v.implied_vol }))
        .collect()
}

pub fn term_structure_json(params_json: &str, max_expiry: f64, n: usize) -> Result<String> {
    let p = params(params_json)?;
    let expiries = grid(max_expiry / n.max(1) as f64, max_expiry, n)?;
    let pts = atm_term_structure(&expiries, &flat(), &p, &QuadratureConfig::default()).map_err(|e| e.to_string())?;
    Ok(vol_points(&pts).to_string())
}

pub fn smile_json(params_json: &str, expiry: f64, settlement: f64, k_lo: f64, k_hi: f64, n: usize) -> Result<String> {
    let p = params(params_json)?;
    let strikes = grid(k_lo, k_hi, n)?;
    let pts = smile_slice(&strikes, expiry, settlement, &flat(), &p, &QuadratureConfig::default())
        .map_err(|e| e.to_string())?;
    Ok(vol_points(&pts).to_string())
}

pub fn drift_factor_json(params_json: &str, settlement: f64, n: usize) -> Result<String> {
    let p = params(params_json)?;
    let times = grid(0.0, settlement, n)?;
    let rows = k_table(&times, settlement, &p).map_err(|e| e.to_string())?;
    let out: Value = rows
        .iter()
        .map(|r| json!({ "t": r.t, "k_sq": r.k_sq, "method": r.method.as_str() }))
        .collect();
    Ok(out.to_string())
}

pub fn presets_json() -> String {
    json!({ "fig1": presets::fig1(), "sec5": presets::sec5() }).to_string()
}

/// ATM implied vol for `n` expiries up to `max_expiry`.
#[wasm_bindgen]
pub fn term_structure(params_json: &str, max_expiry: f64, n: usize) -> std::result::Result<String, JsError> {
    term_structure_json(params_json, max_expiry, n).map_err(|e| JsError::new(&e))
}

/// Implied vol across `n` strikes in `[k_lo, k_hi]`.
#[wasm_bindgen]
pub fn smile(
    params_json: &str,
    expiry: f64,
    settlement: f64,
    k_lo: f64,
    k_hi: f64,
    n: usize,
) -> std::result::Result<String, JsError> {
    smile_json(params_json, expiry, settlement, k_lo, k_hi, n).map_err(|e| JsError::new(&e))
}

/// k^2(t, T) on `n` times in `[0, T]`.
#[wasm_bindgen]
pub fn drift_factor(params_json: &str, settlement: f64, n: usize) -> std::result::Result<String, JsError> {
    drift_factor_json(params_json, settlement, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn preset_params() -> String {
    presets_json()
}
