//! Browser bindings for three small demos: previewing a perturbation signal,
//! TV against central differences on a noisy sine, and fitting a built-in
//! plant end to end. Every export takes plain values and returns JSON text.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

use sindyu::config::RunConfig;
use sindyu::eval::{evaluate, Protocol};
use sindyu::pipeline::{fit_dataset, fit_settings, simulate_config};
use sindyu::plant::{generate_signal, SegmentKind};
use sindyu::render::{render_equations, render_raw_equations, render_report, render_selection};
use sindyu::tvdiff::{central_difference_column, rmse, tv_differentiate_column, TvParams};

#[derive(Debug, Serialize)]
pub struct SignalPreview {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub kinds: Vec<String>,
}

/// `samples` evenly spaced values of a generated signal. `kinds` is a
/// comma-separated subset of `step,linear-ramp,sigmoid-ramp`.
pub fn signal_preview_json(seed: u64, span: f64, segment: f64, lo: f64, hi: f64, kinds: &str, samples: usize) -> Result<String, String> {
    let kinds = parse_kinds(kinds)?;
    let sig = generate_signal(span, segment, (lo, hi), &kinds, seed).map_err(|e| e.to_string())?;
    let samples = samples.max(2);
    let t: Vec<f64> = (0..samples).map(|i| span * i as f64 / (samples - 1) as f64).collect();
    let u = t.iter().map(|&t| sig.sample(t)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let preview = SignalPreview { t, u, kinds: sig.segments.iter().map(|s| s.kind.to_string()).collect() };
    serde_json::to_string(&preview).map_err(|e| e.to_string())
}

fn parse_kinds(text: &str) -> Result<Vec<SegmentKind>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown segment kind `{s}`")))
        .collect()
}

#[derive(Debug, Serialize)]
pub struct DiffComparison {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub truth: Vec<f64>,
    pub tv: Vec<f64>,
    pub central: Vec<f64>,
    pub rmse_tv: f64,
    pub rmse_central: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// `sin(t)` on 1000 samples over `[0, 10]` plus Gaussian noise, differentiated
/// both ways.
pub fn compare_differentiation_json(noise_sigma: f64, reg: f64, seed: u64) -> Result<String, String> {
    if noise_sigma.is_nan() || noise_sigma < 0.0 {
        return Err(format!("noise sigma must be non-negative, got {noise_sigma}"));
    }
    let m = 1000;
    let dt = 10.0 / (m - 1) as f64;
    let t: Vec<f64> = (0..m).map(|i| i as f64 * dt).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| e.to_string())?;
    let x: Vec<f64> = t.iter().map(|t| t.sin() + noise.sample(&mut rng)).collect();
    let truth: Vec<f64> = t.iter().map(|t| t.cos()).collect();
    let col = tv_differentiate_column(&x, dt, &TvParams::with_reg(reg)).map_err(|e| e.to_string())?;
    let central = central_difference_column(&x, dt);
    let out = DiffComparison {
        rmse_tv: rmse(&col.deriv, &truth),
        rmse_central: rmse(&central, &truth),
        converged: col.converged,
        iterations: col.iterations,
        t,
        x,
        truth,
        tv: col.deriv,
        central,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub term_count: usize,
    pub cv_r2: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct FitSummary {
    pub equations: String,
    pub raw_equations: String,
    pub selection: String,
    pub report: String,
    pub state_names: Vec<String>,
    pub paths: Vec<Vec<PathPoint>>,
    pub chosen: Vec<usize>,
    pub rows: usize,
}

/// Simulates, fits and scores on held-out rows. `config` is a run config
/// in JSON; unknown keys are rejected as on the command line.
pub fn fit_plant_json(config: &str) -> Result<String, String> {
    let cfg = RunConfig::from_json(config).map_err(|e| e.to_string())?;
    let (_, _, ds, _) = simulate_config(&cfg).map_err(|e| e.to_string())?;
    let fit = fit_dataset(&ds, &fit_settings(&cfg)).map_err(|e| e.to_string())?;
    let report = evaluate(&fit.model, &ds, Some(&fit.split.test), Protocol::HeldOut).map_err(|e| e.to_string())?;
    let model = &fit.model;
    let out = FitSummary {
        equations: render_equations(model),
        raw_equations: render_raw_equations(model),
        selection: render_selection(&model.state_names, &model.selections),
        report: render_report(&report),
        state_names: model.state_names.clone(),
        paths: fit
            .paths
            .iter()
            .map(|p| p.entries.iter().map(|e| PathPoint { lambda: e.lambda, term_count: e.term_count, cv_r2: e.cv_r2 }).collect())
            .collect(),
        chosen: model.selections.iter().map(|s| s.chosen_index).collect(),
        rows: ds.len(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn signal_preview(seed: u64, span: f64, segment: f64, lo: f64, hi: f64, kinds: &str, samples: usize) -> Result<String, JsError> {
    signal_preview_json(seed, span, segment, lo, hi, kinds, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compare_differentiation(noise_sigma: f64, reg: f64, seed: u64) -> Result<String, JsError> {
    compare_differentiation_json(noise_sigma, reg, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fit_plant(config: &str) -> Result<String, JsError> {
    fit_plant_json(config).map_err(|e| JsError::new(&e))
}
