//! Scoring fitted models: derivative prediction, forward integration and
//! the held-out / long-time / outside-perturbation protocols.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_311, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::model::SparseModel;
use crate::ode::rk4_step;
use crate::plant::{generate_signal, simulate, PerturbationSignal, PlantSpec, SegmentKind};
use crate::selection::r_squared;
use crate::tvdiff::{differentiate, DiffSettings};

/// Normalized states beyond this magnitude count as a blow-up.
pub const INTEGRATION_BOUND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    HeldOut,
    LongTime,
    OutsidePerturbation,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::HeldOut => "held-out",
            Protocol::LongTime => "long-time",
            Protocol::OutsidePerturbation => "outside-perturbation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateScore {
    pub name: String,
    pub train_r2: Option<f64>,
    /// `None` when the target has zero variance on the evaluated rows.
    pub test_r2: Option<f64>,
    pub term_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationReport {
    pub protocol: Protocol,
    pub fingerprint: String,
    pub rows: usize,
    pub per_state: Vec<StateScore>,
}

fn check_variables(model: &SparseModel, ds: &TimeSeriesDataset) -> Result<()> {
    if ds.variable_names() != model.library.variable_names {
        return Err(Error::Schema(format!(
            "dataset variables {:?} do not match model variables {:?}",
            ds.variable_names(),
            model.library.variable_names
        )));
    }
    Ok(())
}

/// `Θ(z) Ξ` on every row, with `z` the dataset autoscaled by the model's
/// stored statistics. Units are those of the autoscaled targets.
pub fn predict_derivatives(model: &SparseModel, ds: &TimeSeriesDataset) -> Result<Array2<f64>> {
    check_variables(model, ds)?;
    let z = model.norm_stats.apply(ds)?;
    let theta = model.library.evaluate(&z)?;
    Ok(theta.dot(&model.xi()))
}

/// Autoscaled derivative targets of `ds`, differentiated the way the model's
/// training data was.
pub fn derivative_targets(model: &SparseModel, ds: &TimeSeriesDataset, diff: &DiffSettings) -> Result<Array2<f64>> {
    check_variables(model, ds)?;
    let z = model.norm_stats.apply(ds)?;
    let mut d = differentiate(&z, diff)?.derivs.derivs;
    for (i, mut col) in d.axis_iter_mut(Axis(1)).enumerate() {
        let s = model.target_stats[i];
        col.mapv_inplace(|v| s.apply(v));
    }
    Ok(d)
}

fn model_diff(model: &SparseModel) -> DiffSettings {
    model.provenance.as_ref().map(|p| p.diff).unwrap_or_default()
}

/// Per-state R² over `rows` (all rows when `None`) between predictions and
/// numerically differentiated targets.
pub fn evaluate(model: &SparseModel, ds: &TimeSeriesDataset, rows: Option<&[usize]>, protocol: Protocol) -> Result<EvaluationReport> {
    let targets = derivative_targets(model, ds, &model_diff(model))?;
    let pred = predict_derivatives(model, ds)?;
    score(model, ds, targets.view(), pred.view(), rows, protocol)
}

/// [`evaluate`] with targets supplied by the caller.
pub fn score(
    model: &SparseModel,
    ds: &TimeSeriesDataset,
    targets: ArrayView2<f64>,
    pred: ArrayView2<f64>,
    rows: Option<&[usize]>,
    protocol: Protocol,
) -> Result<EvaluationReport> {
    let n = model.n_states();
    if targets.dim() != (ds.len(), n) || pred.dim() != (ds.len(), n) {
        return Err(Error::Shape("targets and predictions must be rows × states".into()));
    }
    let (t, p) = match rows {
        Some(r) => {
            if let Some(&bad) = r.iter().find(|&&i| i >= ds.len()) {
                return Err(Error::Parameter(format!("row {bad} outside dataset of {} rows", ds.len())));
            }
            (targets.select(Axis(0), r), pred.select(Axis(0), r))
        }
        None => (targets.to_owned(), pred.to_owned()),
    };
    let mut per_state = Vec::with_capacity(n);
    for i in 0..n {
        let r2 = match r_squared(t.column(i), p.column(i)) {
            Ok(v) => Some(v),
            Err(Error::UndefinedR2) => None,
            Err(e) => return Err(e),
        };
        per_state.push(StateScore {
            name: model.state_names[i].clone(),
            train_r2: model.train_r2[i],
            test_r2: r2,
            term_count: model.support_indices(i).len(),
        });
    }
    Ok(EvaluationReport { protocol, fingerprint: ds.fingerprint(), rows: t.nrows(), per_state })
}

/// Forcing for [`integrate_model`].
#[derive(Debug, Clone, Copy)]
pub enum InputSource<'a> {
    /// Evaluated exactly; each step uses the segment holding its midpoint.
    Signal(&'a PerturbationSignal),
    /// Linear interpolation between samples on `times`.
    Sampled { times: &'a [f64], values: &'a [f64] },
}

impl InputSource<'_> {
    fn end(&self) -> f64 {
        match self {
            InputSource::Signal(s) => s.span(),
            InputSource::Sampled { times, .. } => *times.last().unwrap_or(&0.0),
        }
    }

    fn at(&self, t: f64) -> Result<f64> {
        match self {
            InputSource::Signal(s) => s.sample(t),
            InputSource::Sampled { times, values } => interpolate(times, values, t),
        }
    }
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> Result<f64> {
    let (first, last) = (times[0], times[times.len() - 1]);
    let slack = 1e-9 * (last - first).abs().max(1.0);
    if t < first - slack || t > last + slack {
        return Err(Error::Range { t, span: last });
    }
    let k = times.partition_point(|&s| s <= t);
    if k == 0 {
        return Ok(values[0]);
    }
    if k >= times.len() {
        return Ok(values[times.len() - 1]);
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    Ok(values[k - 1] + w * (values[k] - values[k - 1]))
}

/// Integrates the learned equations from raw initial state `x0` over
/// `[0, t_end]` with fixed RK4 steps of `dt` in the model's autoscaled
/// coordinates, returning raw states and input on the step grid.
pub fn integrate_model(model: &SparseModel, x0: &[f64], input: InputSource<'_>, t_end: f64, dt: f64) -> Result<TimeSeriesDataset> {
    let n = model.n_states();
    if x0.len() != n || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter(format!("initial state must be {n} finite values")));
    }
    if let InputSource::Sampled { times, values } = input {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::Shape("sampled input needs matching times and values, at least 2".into()));
        }
    }
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(Error::Parameter(format!("need dt > 0 and t_end > 0, got {dt} and {t_end}")));
    }
    let steps = (t_end / dt).round() as usize;
    if ((steps as f64) * dt - t_end).abs() > 1e-9 * t_end {
        return Err(Error::Parameter(format!("t_end {t_end} is not a multiple of dt {dt}")));
    }
    if t_end > input.end() * (1.0 + 1e-12) {
        return Err(Error::Range { t: t_end, span: input.end() });
    }

    let stats = &model.norm_stats;
    let u_stats = stats.column(n);
    let xi = model.xi();
    let k = model.library.len();
    let mut z: Vec<f64> = (0..n).map(|i| stats.column(i).apply(x0[i])).collect();
    let mut next = vec![0.0; n];
    let mut vars = vec![0.0; n + 1];
    let mut theta = vec![0.0; k];
    let mut rhs_at = |zv: &[f64], u: f64, out: &mut [f64]| {
        vars[..n].copy_from_slice(zv);
        vars[n] = u_stats.apply(u);
        model.library.eval_point(&vars, &mut theta);
        for i in 0..n {
            let mut y = 0.0;
            for (j, th) in theta.iter().enumerate() {
                let c = xi[[j, i]];
                if c != 0.0 {
                    y += c * th;
                }
            }
            let s = model.target_stats[i];
            out[i] = s.invert(y);
        }
    };

    let m = steps + 1;
    let times: Vec<f64> = (0..m).map(|i| i as f64 * dt).collect();
    let mut states = Array2::zeros((m, n));
    let mut u_out = Array1::zeros(m);
    for i in 0..m {
        for j in 0..n {
            states[[i, j]] = stats.column(j).invert(z[j]);
        }
        u_out[i] = input.at(times[i].min(input.end()))?;
        if i == steps {
            break;
        }
        match input {
            InputSource::Signal(sig) => {
                let seg = sig.segment_index((times[i] + 0.5 * dt).min(sig.span()))?;
                let mut f = |t: f64, y: &[f64], out: &mut [f64]| rhs_at(y, sig.eval_in_segment(seg, t), out);
                rk4_step(&mut f, times[i], &z, dt, &mut next);
            }
            InputSource::Sampled { times: ts, values } => {
                let mut f = |t: f64, y: &[f64], out: &mut [f64]| {
                    let u = interpolate(ts, values, t).unwrap_or(f64::NAN);
                    rhs_at(y, u, out)
                };
                rk4_step(&mut f, times[i], &z, dt, &mut next);
            }
        }
        if next.iter().any(|v| !v.is_finite() || v.abs() > INTEGRATION_BOUND) {
            return Err(Error::Divergence { time: times[i + 1] });
        }
        z.copy_from_slice(&next);
    }
    TimeSeriesDataset::new(model.state_names.clone(), model.input_name.clone(), times, states, u_out)
}

/// How the long-time and outside-perturbation datasets are generated.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSettings {
    pub long_time_factor: f64,
    pub segment_duration: f64,
    pub kinds: Vec<SegmentKind>,
    pub training_bounds: (f64, f64),
    pub outside_bounds: (f64, f64),
    pub noise_sigma: f64,
    pub long_signal_seed: u64,
    pub long_noise_seed: u64,
    pub outside_signal_seed: u64,
    pub outside_noise_seed: u64,
}

/// One protocol's report with the data it was computed on; `None` for the
/// held-out rows, which live in the training dataset.
#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub report: EvaluationReport,
    pub dataset: Option<(TimeSeriesDataset, PerturbationSignal)>,
}

/// Held-out rows of `train`, then a fresh simulation with amplitudes from
/// `outside_bounds`, then one `long_time_factor` times longer.
pub fn run_protocol_suite(
    model: &SparseModel,
    plant: &PlantSpec,
    train: &TimeSeriesDataset,
    settings: &ProtocolSettings,
) -> Result<Vec<ProtocolRun>> {
    let prov = model
        .provenance
        .as_ref()
        .ok_or_else(|| Error::Parameter("model carries no fit provenance; the held-out rows are unknown".into()))?;
    if train.fingerprint() != model.fitted_on {
        return Err(Error::Schema("training dataset differs from the one the model was fit on".into()));
    }
    let split = split_311(train.len(), prov.split_seed)?;
    let held = evaluate(model, train, Some(&split.test), Protocol::HeldOut)?;

    let dt = train.dt();
    let base = train.duration();
    let jobs = [
        (Protocol::OutsidePerturbation, base, settings.outside_bounds, settings.outside_signal_seed, settings.outside_noise_seed),
        (
            Protocol::LongTime,
            base * settings.long_time_factor,
            settings.training_bounds,
            settings.long_signal_seed,
            settings.long_noise_seed,
        ),
    ];
    let runs: Vec<Result<ProtocolRun>> = jobs
        .par_iter()
        .map(|&(protocol, span, bounds, sig_seed, noise_seed)| {
            let span = (span / settings.segment_duration).round() * settings.segment_duration;
            let sig = generate_signal(span, settings.segment_duration, bounds, &settings.kinds, sig_seed)?;
            let ds = simulate(plant, &sig, dt, settings.noise_sigma, noise_seed)?;
            let report = evaluate(model, &ds, None, protocol).map_err(|e| e.context(protocol.to_string()))?;
            Ok(ProtocolRun { report, dataset: Some((ds, sig)) })
        })
        .collect();
    let mut out = vec![ProtocolRun { report: held, dataset: None }];
    for r in runs {
        out.push(r?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::{CandidateLibrary, LibraryConfig};

    fn decay_model(rate: f64) -> SparseModel {
        let cfg = LibraryConfig { unary_fns: vec![], min_exponent: 0, max_total_degree: 1, ..LibraryConfig::default() };
        let lib = CandidateLibrary::build(&["x".into(), "u".into()], &cfg).unwrap();
        let mut c = vec![0.0; lib.len()];
        c[lib.index_of("x").unwrap()] = rate;
        SparseModel::from_coefficients(lib, 1, vec![c]).unwrap()
    }

    fn zero_input(t_end: f64) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0, t_end], vec![0.0, 0.0])
    }

    #[test]
    fn exponential_decay() {
        let m = decay_model(-1.0);
        let (t, u) = zero_input(1.0);
        let out = integrate_model(&m, &[1.0], InputSource::Sampled { times: &t, values: &u }, 1.0, 0.001).unwrap();
        let end = out.states()[[out.len() - 1, 0]];
        assert!((end - (-1.0f64).exp()).abs() < 1e-5);
        assert_eq!(out.len(), 1001);
    }

    #[test]
    fn zero_model_stays_put() {
        let m = decay_model(0.0);
        let (t, u) = zero_input(2.0);
        let out = integrate_model(&m, &[0.7], InputSource::Sampled { times: &t, values: &u }, 2.0, 0.1).unwrap();
        assert!(out.states().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn growth_diverges() {
        let m = decay_model(1.0);
        let (t, u) = zero_input(40.0);
        let err = integrate_model(&m, &[1.0], InputSource::Sampled { times: &t, values: &u }, 40.0, 0.01).unwrap_err();
        match err {
            Error::Divergence { time } => assert!((time - 13.82).abs() < 0.05, "{time}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn interpolation_and_range() {
        let t = [0.0, 1.0, 2.0];
        let v = [0.0, 10.0, 0.0];
        assert_eq!(interpolate(&t, &v, 0.25).unwrap(), 2.5);
        assert_eq!(interpolate(&t, &v, 1.5).unwrap(), 5.0);
        assert_eq!(interpolate(&t, &v, 2.0).unwrap(), 0.0);
        assert!(interpolate(&t, &v, 2.5).is_err());
        let m = decay_model(-1.0);
        assert!(integrate_model(&m, &[1.0], InputSource::Sampled { times: &t, values: &v }, 3.0, 0.5).is_err());
    }

    #[test]
    fn prediction_checks_names() {
        let m = decay_model(-1.0);
        let ds = TimeSeriesDataset::new(
            vec!["y".into()],
            "u",
            vec![0.0, 1.0, 2.0],
            Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap(),
            Array1::zeros(3),
        )
        .unwrap();
        assert!(matches!(predict_derivatives(&m, &ds), Err(Error::Schema(_))));
    }
}
