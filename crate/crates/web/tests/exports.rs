use serde_json::Value;
use sindyu_web::{compare_differentiation_json, fit_plant_json, signal_preview_json};

#[test]
fn signal_preview_stays_in_bounds() {
    let v: Value = serde_json::from_str(&signal_preview_json(3, 12.0, 1.0, 1000.0, 3000.0, "step, sigmoid-ramp", 500).unwrap()).unwrap();
    let u = v["u"].as_array().unwrap();
    assert_eq!(u.len(), 500);
    assert!(u.iter().all(|x| (1000.0..=3000.0).contains(&x.as_f64().unwrap())));
    let kinds = v["kinds"].as_array().unwrap();
    assert_eq!(kinds.len(), 12);
    assert!(kinds.iter().all(|k| k != "linear-ramp"));
}

#[test]
fn signal_preview_rejects_bad_input() {
    assert!(signal_preview_json(0, 12.0, 1.0, 1000.0, 3000.0, "square", 10).unwrap_err().contains("square"));
    assert!(signal_preview_json(0, 12.0, 1.0, 3000.0, 1000.0, "step", 10).is_err());
}

#[test]
fn differentiation_comparison_favours_tv_under_noise() {
    let v: Value = serde_json::from_str(&compare_differentiation_json(0.05, 1e-1, 7).unwrap()).unwrap();
    assert_eq!(v["tv"].as_array().unwrap().len(), 1000);
    assert!(v["rmse_tv"].as_f64().unwrap() < v["rmse_central"].as_f64().unwrap());
    assert!(compare_differentiation_json(-1.0, 1e-3, 0).is_err());
    assert!(compare_differentiation_json(0.0, 0.0, 0).is_err());
}

#[test]
fn fit_plant_reports_equations() {
    let cfg = r#"{"plant": "forced-linear-2", "duration": 20, "diff": "central"}"#;
    let v: Value = serde_json::from_str(&fit_plant_json(cfg).unwrap()).unwrap();
    assert_eq!(v["rows"], 2001);
    assert!(v["equations"].as_str().unwrap().starts_with("dx1/dt ="));
    assert!(v["report"].as_str().unwrap().starts_with("held-out"));
    assert_eq!(v["paths"].as_array().unwrap().len(), 2);
}

#[test]
fn fit_plant_rejects_unknown_keys() {
    let err = fit_plant_json(r#"{"plant": "forced-linear-2", "bogus": 1}"#).unwrap_err();
    assert!(err.contains("bogus"), "{err}");
}
