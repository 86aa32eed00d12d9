use fcsv_wasm::{drift_factor_json, presets_json, smile_json, term_structure_json};
use serde_json::Value;

fn fig1() -> String {
    let all: Value = serde_json::from_str(&presets_json()).unwrap();
    all["fig1"].to_string()
}

fn vols(json: &str) -> Vec<f64> {
    let v: Value = serde_json::from_str(json).unwrap();
    v.as_array()
        .unwrap()
        .iter()
        .map(|p| p["vol"].as_f64().unwrap())
        .collect()
}

#[test]
fn term_structure_decreases() {
    let v = vols(&term_structure_json(&fig1(), 5.0, 8).unwrap());
    assert_eq!(v.len(), 8);
    assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
}

#[test]
fn smile_spans_strikes() {
    let out: Value = serde_json::from_str(&smile_json(&fig1(), 1.0, 1.0, 0.6, 1.8, 7).unwrap()).unwrap();
    let pts = out.as_array().unwrap();
    assert_eq!(pts.len(), 7);
    assert_eq!(pts[0]["K"].as_f64().unwrap(), 0.6);
    assert!((pts[6]["K"].as_f64().unwrap() - 1.8).abs() < 1e-12);
    assert!(pts.iter().all(|p| p["vol"].as_f64().unwrap() > 0.0));
}

#[test]
fn drift_factor_curve_starts_with_fallback() {
    let all: Value = serde_json::from_str(&presets_json()).unwrap();
    let out: Value = serde_json::from_str(&drift_factor_json(&all["sec5"].to_string(), 2.0, 5).unwrap()).unwrap();
    let rows = out.as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0]["method"], "fallback");
    assert!(rows.iter().all(|r| r["k_sq"].as_f64().unwrap() > 0.0));
}

#[test]
fn bad_input_is_reported() {
    assert!(term_structure_json("{}", 5.0, 8)
        .unwrap_err()
        .contains("bad parameters"));
    let mut p: Value = serde_json::from_str(&fig1()).unwrap();
    p["sigma"] = (-1.0).into();
    assert!(term_structure_json(&p.to_string(), 5.0, 8).is_err());
    assert!(smile_json(&fig1(), 1.0, 1.0, 1.0, 0.5, 5).is_err());
}
