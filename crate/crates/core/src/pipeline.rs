//! End-to-end fitting and the file-writing commands behind the CLI.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compare::{compare_state, render_comparison, support_of, StateComparison};
use crate::config::{derive_seed, RunConfig};
use crate::data::{normalize, split_311, ColumnStats, SplitIndices, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::eval::{integrate_model, run_protocol_suite, EvaluationReport, InputSource, ProtocolSettings};
use crate::library::{CandidateLibrary, LibraryConfig};
use crate::model::{FitProvenance, SparseModel};
use crate::plant::{builtin_plant, generate_signal, simulate, PerturbationSignal, PlantSpec, SimulationSettings, TruthManifest};
use crate::regression::{collect_states, fit_all_states, PathSettings, RegularizationPath};
use crate::render::{path_table_csv, render_equations, render_raw_equations, render_report, render_selection};
use crate::selection::{fill_cv, select, ScoreWeights, SelectionMethod, SelectionReport};
use crate::tvdiff::{differentiate, DiffSettings};

#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub diff: DiffSettings,
    pub library: LibraryConfig,
    pub path: PathSettings,
    pub selection: SelectionMethod,
    pub weights: ScoreWeights,
    pub split_seed: u64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            diff: DiffSettings::default(),
            library: LibraryConfig::default(),
            path: PathSettings::default(),
            selection: SelectionMethod::CvPeak,
            weights: ScoreWeights::default(),
            split_seed: 0,
        }
    }
}

/// A fitted model together with the paths it was selected from.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: SparseModel,
    pub paths: Vec<RegularizationPath>,
    pub split: SplitIndices,
}

impl FitOutcome {
    /// Re-runs selection on the stored paths; nothing is refit.
    pub fn reselect(&self, method: SelectionMethod, weights: ScoreWeights) -> Result<SparseModel> {
        let mut model = self.model.clone();
        apply_selection(&mut model, &self.paths, method, weights)?;
        Ok(model)
    }
}

fn apply_selection(model: &mut SparseModel, paths: &[RegularizationPath], method: SelectionMethod, weights: ScoreWeights) -> Result<()> {
    let reports = collect_states(paths.iter().map(|p| select(p, method, weights)).collect())?;
    for (i, r) in reports.iter().enumerate() {
        let e = &paths[i].entries[r.chosen_index];
        model.coefficients[i] = e.coefficients.clone();
        model.lambdas[i] = Some(e.lambda);
        model.train_r2[i] = Some(e.train_r2);
    }
    if let Some(p) = model.provenance.as_mut() {
        p.selection = method;
        p.weights = weights;
    }
    model.selections = reports;
    Ok(())
}

/// Autoscale, differentiate, build `Θ`, split 3:1:1, fit one LASSO path per
/// state on the training rows, score it on the CV rows and select.
pub fn fit_dataset(ds: &TimeSeriesDataset, settings: &FitSettings) -> Result<FitOutcome> {
    let (z, norm_stats) = normalize(ds).map_err(|e| e.context("normalize"))?;
    let diff = differentiate(&z, &settings.diff).map_err(|e| e.context("differentiate"))?;
    let mut targets = diff.derivs.derivs;
    let mut target_stats = Vec::with_capacity(ds.n_states());
    for (i, mut col) in targets.axis_iter_mut(Axis(1)).enumerate() {
        let s = ColumnStats::compute(col.view(), &format!("d{}/dt", ds.names()[i])).map_err(|e| e.context("differentiate"))?;
        col.mapv_inplace(|v| s.apply(v));
        target_stats.push(s);
    }
    let library = CandidateLibrary::build(&ds.variable_names(), &settings.library).map_err(|e| e.context("library"))?;
    let theta = library.evaluate(&z).map_err(|e| e.context("library"))?;
    let split = split_311(ds.len(), settings.split_seed)?;
    let th_tr = theta.select(Axis(0), &split.train);
    let th_cv = theta.select(Axis(0), &split.cv);
    let y_tr = targets.select(Axis(0), &split.train);
    let y_cv = targets.select(Axis(0), &split.cv);

    let mut paths = collect_states(fit_all_states(th_tr.view(), y_tr.view(), &settings.path)).map_err(|e| e.context("regression"))?;
    collect_states(paths.par_iter_mut().enumerate().map(|(i, p)| fill_cv(p, th_cv.view(), y_cv.column(i))).collect())
        .map_err(|e| e.context("selection"))?;

    let n = ds.n_states();
    let k = library.len();
    let mut model = SparseModel {
        state_names: ds.names().to_vec(),
        input_name: ds.input_name().to_string(),
        library,
        coefficients: vec![vec![0.0; k]; n],
        lambdas: vec![None; n],
        norm_stats,
        target_stats,
        fitted_on: ds.fingerprint(),
        train_r2: vec![None; n],
        selections: vec![],
        provenance: Some(FitProvenance {
            diff: settings.diff,
            path: settings.path,
            split_seed: settings.split_seed,
            selection: settings.selection,
            weights: settings.weights,
            diff_converged: diff.converged,
            n_rows: ds.len(),
            dt: ds.dt(),
        }),
    };
    apply_selection(&mut model, &paths, settings.selection, settings.weights).map_err(|e| e.context("selection"))?;
    Ok(FitOutcome { model, paths, split })
}

fn write(path: &Path, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::from(e).context(dir.display().to_string()))?;
    }
    fs::write(path, text).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    written.push(path.to_path_buf());
    Ok(())
}

fn plant_of(cfg: &RunConfig) -> Result<Option<PlantSpec>> {
    cfg.plant.as_deref().map(builtin_plant).transpose()
}

fn training_bounds(cfg: &RunConfig, plant: &PlantSpec) -> (f64, f64) {
    cfg.training_bounds.unwrap_or(plant.training_bounds)
}

/// The training signal and dataset a config describes.
pub fn simulate_config(cfg: &RunConfig) -> Result<(PlantSpec, PerturbationSignal, TimeSeriesDataset, TruthManifest)> {
    cfg.validate()?;
    let plant = plant_of(cfg)?.ok_or_else(|| Error::Schema("`plant` is required to simulate".into()))?;
    let signal_seed = derive_seed(cfg.seed, "signal");
    let noise_seed = derive_seed(cfg.seed, "noise");
    let signal = generate_signal(cfg.duration, cfg.segment_duration, training_bounds(cfg, &plant), &cfg.perturbation_kinds, signal_seed)?;
    let ds = simulate(&plant, &signal, cfg.dt, cfg.noise_sigma, noise_seed).map_err(|e| e.context("simulate"))?;
    let sim = SimulationSettings { duration: cfg.duration, dt: cfg.dt, noise_sigma: cfg.noise_sigma };
    let manifest = TruthManifest::new(&plant, &sim, signal_seed, noise_seed);
    Ok((plant, signal, ds, manifest))
}

/// Writes `dataset.csv`, `truth.json` and `signal.json` into `out_dir`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (_, signal, ds, manifest) = simulate_config(cfg)?;
    let mut written = vec![];
    let mut csv = Vec::new();
    ds.write_csv(&mut csv)?;
    write(&cfg.out_dir.join("dataset.csv"), std::str::from_utf8(&csv).expect("csv is utf-8"), &mut written)?;
    write(&cfg.out_dir.join("truth.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"), &mut written)?;
    write(&cfg.out_dir.join("signal.json"), &(serde_json::to_string_pretty(&signal)? + "\n"), &mut written)?;
    Ok(written)
}

pub fn load_dataset(cfg: &RunConfig) -> Result<TimeSeriesDataset> {
    let plant = plant_of(cfg)?;
    let input = cfg.input_column.clone().or_else(|| plant.map(|p| p.input_name)).unwrap_or_else(|| "u".into());
    let path = cfg.dataset_path();
    TimeSeriesDataset::ingest_csv(&path, &input).map_err(|e| e.context(path.display().to_string()))
}

pub fn fit_settings(cfg: &RunConfig) -> FitSettings {
    FitSettings {
        diff: cfg.diff_settings(),
        library: cfg.library(),
        path: cfg.path(),
        selection: cfg.selection,
        weights: cfg.weights(),
        split_seed: derive_seed(cfg.seed, "split"),
    }
}

/// Fits the dataset and writes `model.json`, `equations.txt`,
/// `selection.txt` and one `paths/<state>.csv` per state.
pub fn cmd_fit(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let out = fit_dataset(&ds, &fit_settings(cfg))?;
    let mut written = vec![];
    let model_path = cfg.model_path();
    write(&model_path, &(out.model.to_json()? + "\n"), &mut written)?;
    write(&cfg.out_dir.join("equations.txt"), &equations_text(&out.model), &mut written)?;
    for (i, p) in out.paths.iter().enumerate() {
        let chosen = out.model.selections[i].chosen_index;
        let name = format!("{}.csv", out.model.state_names[i]);
        write(&cfg.out_dir.join("paths").join(name), &path_table_csv(p, Some(chosen)), &mut written)?;
    }
    // Both selection rules, read off the same paths.
    let mut text = String::new();
    for method in [SelectionMethod::CvPeak, SelectionMethod::ComplexityScore] {
        let reports: Vec<Result<SelectionReport>> = out.paths.iter().map(|p| select(p, method, cfg.weights())).collect();
        text.push_str(&format!("[{method}]{}\n", if method == cfg.selection { " (used)" } else { "" }));
        for (i, r) in reports.into_iter().enumerate() {
            match r {
                Ok(r) => text.push_str(&render_selection(&out.model.state_names, &[r])),
                Err(e) => text.push_str(&format!("{}: {e}\n", out.model.state_names[i])),
            }
        }
    }
    write(&cfg.out_dir.join("selection.txt"), &text, &mut written)?;
    Ok(written)
}

/// Outcome of integrating the model over the training horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySummary {
    /// Root-mean-square error per state in units of that state's training
    /// standard deviation; empty when the integration diverged.
    pub normalized_rmse: Vec<f64>,
    pub diverged_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationOutput {
    pub reports: Vec<EvaluationReport>,
    pub trajectory: TrajectorySummary,
}

fn trajectory(
    model: &SparseModel,
    ds: &TimeSeriesDataset,
    signal: Option<&PerturbationSignal>,
) -> Result<(TrajectorySummary, Option<String>)> {
    let x0: Vec<f64> = ds.states().row(0).to_vec();
    let t0 = ds.times()[0];
    let shifted: Vec<f64> = ds.times().iter().map(|t| t - t0).collect();
    let input = match signal {
        Some(s) => InputSource::Signal(s),
        None => InputSource::Sampled { times: &shifted, values: ds.input().as_slice().expect("contiguous input") },
    };
    let t_end = ds.times()[ds.len() - 1] - ds.times()[0];
    match integrate_model(model, &x0, input, t_end, ds.dt()) {
        Ok(sim) => {
            let n = ds.n_states();
            let rmse = (0..n)
                .map(|j| {
                    let d: Array1<f64> = &ds.states().column(j) - &sim.states().column(j);
                    (d.mapv(|v| v * v).sum() / d.len() as f64).sqrt() / model.norm_stats.scales[j]
                })
                .collect();
            let mut csv = String::from("time");
            for s in &model.state_names {
                csv.push_str(&format!(",{s},{s}_model"));
            }
            csv.push('\n');
            for i in 0..ds.len() {
                csv.push_str(&crate::data::format_value(ds.times()[i]));
                for j in 0..n {
                    csv.push(',');
                    csv.push_str(&crate::data::format_value(ds.states()[[i, j]]));
                    csv.push(',');
                    csv.push_str(&crate::data::format_value(sim.states()[[i, j]]));
                }
                csv.push('\n');
            }
            Ok((TrajectorySummary { normalized_rmse: rmse, diverged_at: None }, Some(csv)))
        }
        Err(Error::Divergence { time }) => Ok((TrajectorySummary { normalized_rmse: vec![], diverged_at: Some(time) }, None)),
        Err(e) => Err(e),
    }
}

pub fn protocol_settings(cfg: &RunConfig, plant: &PlantSpec) -> ProtocolSettings {
    ProtocolSettings {
        long_time_factor: cfg.long_time_factor,
        segment_duration: cfg.segment_duration,
        kinds: cfg.perturbation_kinds.clone(),
        training_bounds: training_bounds(cfg, plant),
        outside_bounds: cfg.outside_bounds.unwrap_or(plant.outside_bounds),
        noise_sigma: cfg.noise_sigma,
        long_signal_seed: derive_seed(cfg.seed, "long-signal"),
        long_noise_seed: derive_seed(cfg.seed, "long-noise"),
        outside_signal_seed: derive_seed(cfg.seed, "outside-signal"),
        outside_noise_seed: derive_seed(cfg.seed, "outside-noise"),
    }
}

/// Runs the protocol suite (held-out only without a plant), integrates the
/// model over the training horizon, and writes `report.txt`, `report.json`
/// and `trajectory.csv`.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let model = SparseModel::load(cfg.model_path())?;
    let ds = load_dataset(cfg)?;
    let plant = plant_of(cfg)?;
    let reports = match &plant {
        Some(p) => run_protocol_suite(&model, p, &ds, &protocol_settings(cfg, p))?.into_iter().map(|r| r.report).collect(),
        None => {
            let prov = model.provenance.as_ref().ok_or_else(|| Error::Parameter("model carries no fit provenance".into()))?;
            if ds.fingerprint() != model.fitted_on {
                return Err(Error::Schema("dataset differs from the one the model was fit on".into()));
            }
            let split = split_311(ds.len(), prov.split_seed)?;
            vec![crate::eval::evaluate(&model, &ds, Some(&split.test), crate::eval::Protocol::HeldOut)?]
        }
    };
    let signal = match &plant {
        Some(_) => Some(simulate_config(cfg)?.1),
        None => None,
    };
    let (summary, traj_csv) = trajectory(&model, &ds, signal.as_ref())?;

    let mut text = String::new();
    for r in &reports {
        text.push_str(&render_report(r));
        text.push('\n');
    }
    match summary.diverged_at {
        Some(t) => text.push_str(&format!("trajectory from the initial state diverged at t = {t}\n")),
        None => {
            text.push_str("trajectory from the initial state, RMSE / training std:\n");
            for (s, e) in model.state_names.iter().zip(&summary.normalized_rmse) {
                text.push_str(&format!("  {s}  {e:.4e}\n"));
            }
        }
    }
    let output = EvaluationOutput { reports, trajectory: summary };
    let mut written = vec![];
    write(&cfg.out_dir.join("report.txt"), &text, &mut written)?;
    write(&cfg.out_dir.join("report.json"), &(serde_json::to_string_pretty(&output)? + "\n"), &mut written)?;
    if let Some(csv) = traj_csv {
        write(&cfg.out_dir.join("trajectory.csv"), &csv, &mut written)?;
    }
    Ok(written)
}

/// Per-state comparisons across the `models` listed in the config.
pub fn compare_models(models: &[SparseModel], ids: &[String]) -> Result<Vec<StateComparison>> {
    if models.len() < 2 {
        return Err(Error::Parameter("compare needs at least two models".into()));
    }
    let first = &models[0];
    for (m, id) in models.iter().zip(ids).skip(1) {
        if m.state_names != first.state_names {
            return Err(Error::Comparability(format!("`{id}` has states {:?}, expected {:?}", m.state_names, first.state_names)));
        }
    }
    (0..first.n_states())
        .map(|i| {
            let supports: Vec<_> = models.iter().zip(ids).map(|(m, id)| support_of(m, i, id)).collect();
            compare_state(&supports)
        })
        .collect()
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let models = cfg.models.iter().map(SparseModel::load).collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = if cfg.system_ids.is_empty() {
        cfg.models.iter().map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()).collect()
    } else if cfg.system_ids.len() == cfg.models.len() {
        cfg.system_ids.clone()
    } else {
        return Err(Error::Schema("`system_ids` must have one entry per model".into()));
    };
    let tables = compare_models(&models, &ids)?;
    let text: Vec<String> = tables.iter().map(render_comparison).collect();
    let mut written = vec![];
    write(&cfg.out_dir.join("compare.txt"), &text.join("\n"), &mut written)?;
    write(&cfg.out_dir.join("compare.json"), &(serde_json::to_string_pretty(&tables)? + "\n"), &mut written)?;
    Ok(written)
}

fn equations_text(model: &SparseModel) -> String {
    format!("# autoscaled variables\n{}\n# raw variables\n{}", render_equations(model), render_raw_equations(model))
}

/// Equations of the configured model, autoscaled then raw.
pub fn cmd_render(cfg: &RunConfig) -> Result<(String, Vec<PathBuf>)> {
    let model = SparseModel::load(cfg.model_path())?;
    let text = equations_text(&model);
    let mut written = vec![];
    write(&cfg.out_dir.join("equations.txt"), &text, &mut written)?;
    Ok((text, written))
}
