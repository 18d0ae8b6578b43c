//! Surrogate forced plants with known sparse right-hand sides, and the
//! random perturbation signals that drive them.

use std::collections::BTreeSet;
use std::fmt;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnStats, NormalizationStats, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::library::{CandidateLibrary, LibraryConfig, TermDescriptor};
use crate::ode::rk4_step;
use crate::poly::{self, Polynomial};

/// Steepness of the logistic used by sigmoid ramps.
pub const SIGMOID_STEEPNESS: f64 = 12.0;

/// Trajectories leaving this magnitude are treated as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentKind {
    Step,
    LinearRamp,
    SigmoidRamp,
}

impl SegmentKind {
    pub const ALL: [SegmentKind; 3] = [SegmentKind::Step, SegmentKind::LinearRamp, SegmentKind::SigmoidRamp];
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SegmentKind::Step => "step",
            SegmentKind::LinearRamp => "linear-ramp",
            SegmentKind::SigmoidRamp => "sigmoid-ramp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub duration: f64,
    pub start_level: f64,
    pub end_level: f64,
}

impl Segment {
    /// Level at normalized time `tau ∈ [0, 1]` within the segment.
    pub fn level(&self, tau: f64) -> f64 {
        let tau = tau.clamp(0.0, 1.0);
        let (a, b) = (self.start_level, self.end_level);
        match self.kind {
            SegmentKind::Step => b,
            SegmentKind::LinearRamp => a + (b - a) * tau,
            SegmentKind::SigmoidRamp => a + (b - a) * sigmoid_shape(tau),
        }
    }
}

/// Logistic `σ(k(τ − ½))` rescaled to run exactly from 0 to 1 on `[0, 1]`.
pub fn sigmoid_shape(tau: f64) -> f64 {
    let s = |x: f64| 1.0 / (1.0 + (-x).exp());
    let lo = s(-0.5 * SIGMOID_STEEPNESS);
    let hi = s(0.5 * SIGMOID_STEEPNESS);
    (s(SIGMOID_STEEPNESS * (tau - 0.5)) - lo) / (hi - lo)
}

/// Piecewise forcing `u(t)` on `[0, span]`, evaluated analytically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSignal {
    pub segments: Vec<Segment>,
    pub bounds: (f64, f64),
    pub seed: u64,
}

impl PerturbationSignal {
    pub fn span(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    fn starts(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().scan(0.0, |acc, s| {
            let start = *acc;
            *acc += s.duration;
            Some(start)
        })
    }

    /// Index of the segment containing `t`; boundaries belong to the later segment.
    pub fn segment_index(&self, t: f64) -> Result<usize> {
        let span = self.span();
        let tol = 1e-9 * span.max(1.0);
        if !(t >= -tol && t <= span + tol) {
            return Err(Error::Range { t, span });
        }
        let mut idx = 0;
        for (i, start) in self.starts().enumerate() {
            if start <= t + tol {
                idx = i;
            } else {
                break;
            }
        }
        Ok(idx)
    }

    /// Evaluates segment `idx`'s formula at absolute time `t`, clamping to its ends.
    pub fn eval_in_segment(&self, idx: usize, t: f64) -> f64 {
        let start: f64 = self.segments[..idx].iter().map(|s| s.duration).sum();
        let seg = &self.segments[idx];
        seg.level((t - start) / seg.duration)
    }

    /// Exact value at `t`.
    pub fn sample(&self, t: f64) -> Result<f64> {
        let idx = self.segment_index(t)?;
        Ok(self.eval_in_segment(idx, t))
    }

    /// Smallest and largest level reached.
    pub fn level_range(&self) -> (f64, f64) {
        self.segments.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.start_level.min(s.end_level)), hi.max(s.start_level.max(s.end_level)))
        })
    }
}

/// Random signal of `span / segment_duration` segments. Each segment draws
/// its kind uniformly from `kinds` and its target level uniformly from
/// `bounds`; steps jump to the target at the segment start, ramps move from
/// the previous level to the target.
pub fn generate_signal(
    span: f64,
    segment_duration: f64,
    bounds: (f64, f64),
    kinds: &[SegmentKind],
    seed: u64,
) -> Result<PerturbationSignal> {
    let (lo, hi) = bounds;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Parameter(format!("invalid amplitude bounds ({lo}, {hi})")));
    }
    if !(segment_duration > 0.0 && span > 0.0) {
        return Err(Error::Parameter("span and segment duration must be positive".into()));
    }
    let n = (span / segment_duration).round();
    if n < 1.0 || (n * segment_duration - span).abs() > 1e-9 * span {
        return Err(Error::Parameter(format!("span {span} is not a multiple of the segment duration {segment_duration}")));
    }
    if kinds.is_empty() {
        return Err(Error::Parameter("no segment kinds given".into()));
    }
    let kinds: Vec<SegmentKind> = kinds.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = rng.gen_range(lo..=hi);
    let mut segments = Vec::with_capacity(n as usize);
    for _ in 0..n as usize {
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let target = rng.gen_range(lo..=hi);
        let start_level = if kind == SegmentKind::Step { target } else { level };
        segments.push(Segment { kind, duration: segment_duration, start_level, end_level: target });
        level = target;
    }
    Ok(PerturbationSignal { segments, bounds, seed })
}

/// One monomial of a plant right-hand side, over states then input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTerm {
    pub coefficient: f64,
    pub exponents: Vec<u32>,
}

impl TruthTerm {
    pub fn eval(&self, vars: &[f64]) -> f64 {
        self.exponents.iter().zip(vars).fold(self.coefficient, |acc, (&e, &x)| acc * x.powi(e as i32))
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

/// A forced ODE `ẋ = f(x, u)` whose right-hand side is a sparse polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub name: String,
    pub state_names: Vec<String>,
    pub input_name: String,
    pub rhs: Vec<Vec<TruthTerm>>,
    pub initial_state: Vec<f64>,
    pub training_bounds: (f64, f64),
    pub outside_bounds: (f64, f64),
}

impl PlantSpec {
    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn variable_names(&self) -> Vec<String> {
        let mut v = self.state_names.clone();
        v.push(self.input_name.clone());
        v
    }

    /// `ẋ` at one point, written to `out`.
    pub fn derivative(&self, x: &[f64], u: f64, out: &mut [f64]) {
        let mut vars = x.to_vec();
        vars.push(u);
        for (o, terms) in out.iter_mut().zip(&self.rhs) {
            *o = terms.iter().map(|t| t.eval(&vars)).sum();
        }
    }

    /// Whether every true term is a member of a library built with `config`.
    pub fn representable(&self, config: &LibraryConfig) -> bool {
        self.rhs
            .iter()
            .flatten()
            .all(|t| t.degree() <= config.max_total_degree && t.exponents.iter().all(|&e| e as i32 <= config.max_exponent))
    }

    /// Display names of the true terms of each state, in raw variables.
    pub fn truth_displays(&self) -> Vec<Vec<String>> {
        let names = self.variable_names();
        self.rhs
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|t| TermDescriptor::power_product(t.exponents.iter().map(|&e| e as i32).collect(), &names).display)
                    .collect()
            })
            .collect()
    }

    /// True right-hand side evaluated at every row of `ds`.
    pub fn true_derivatives(&self, ds: &TimeSeriesDataset) -> Array2<f64> {
        let (m, n) = ds.states().dim();
        let mut out = Array2::zeros((m, n));
        let mut row = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 0..m {
            for (r, v) in row.iter_mut().zip(ds.states().row(i)) {
                *r = *v;
            }
            self.derivative(&row, ds.input()[i], &mut d);
            for j in 0..n {
                out[[i, j]] = d[j];
            }
        }
        out
    }

    /// The right-hand side of state `i` rewritten for autoscaled variables
    /// `z = (x − μ)/s` and autoscaled target `(ẋᵢ − target.mean)/target.scale`.
    pub fn normalized_rhs(&self, i: usize, stats: &NormalizationStats, target: ColumnStats) -> Polynomial {
        let n = self.n_states() + 1;
        let mut acc = Polynomial::new();
        for t in &self.rhs[i] {
            let p = poly::expand_affine_monomial(&t.exponents, &stats.scales, &stats.means);
            poly::add_scaled(&mut acc, &p, t.coefficient);
        }
        poly::add_scaled(&mut acc, &poly::constant(n, -target.mean), 1.0);
        acc.values_mut().for_each(|c| *c /= target.scale);
        acc
    }

    /// Library terms carrying a non-zero coefficient in the autoscaled form of
    /// each state's equation, given the data the model is fit on. Returns
    /// `None` for a state whose expansion leaves the library.
    ///
    /// Target statistics come from the exact derivative at every row, so
    /// cancellations that are exact in the true system (for instance the
    /// constant of a linear plant) are recognized: coefficients at most
    /// `1e-9` of the largest are treated as zero.
    pub fn normalized_support(&self, ds: &TimeSeriesDataset, lib: &CandidateLibrary) -> Result<Vec<Option<BTreeSet<String>>>> {
        let (_, stats) = crate::data::normalize(ds)?;
        let truth = self.true_derivatives(ds);
        let mut out = Vec::with_capacity(self.n_states());
        for i in 0..self.n_states() {
            let target = ColumnStats::compute(truth.column(i), &self.state_names[i])?;
            let p = poly::prune(&self.normalized_rhs(i, &stats, target), 1e-9);
            let mut set = BTreeSet::new();
            let mut ok = true;
            for e in p.keys() {
                let exps: Vec<i32> = e.iter().map(|&v| v as i32).collect();
                match lib.find_power_product(&exps) {
                    Some(j) => {
                        set.insert(lib.terms[j].display.clone());
                    }
                    None => ok = false,
                }
            }
            out.push(ok.then_some(set));
        }
        Ok(out)
    }
}

/// Ground truth emitted next to a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub plant: String,
    pub state_names: Vec<String>,
    pub input_name: String,
    /// True terms per state in raw variables, with coefficients.
    pub equations: Vec<Vec<ManifestTerm>>,
    pub representable_in_default_library: bool,
    pub dt: f64,
    pub duration: f64,
    pub noise_sigma: f64,
    pub signal_seed: u64,
    pub noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTerm {
    pub term: String,
    pub coefficient: f64,
    pub exponents: Vec<u32>,
}

impl TruthManifest {
    pub fn new(spec: &PlantSpec, sim: &SimulationSettings, signal_seed: u64, noise_seed: u64) -> Self {
        let displays = spec.truth_displays();
        Self {
            plant: spec.name.clone(),
            state_names: spec.state_names.clone(),
            input_name: spec.input_name.clone(),
            equations: spec
                .rhs
                .iter()
                .zip(displays)
                .map(|(terms, names)| {
                    terms
                        .iter()
                        .zip(names)
                        .map(|(t, term)| ManifestTerm { term, coefficient: t.coefficient, exponents: t.exponents.clone() })
                        .collect()
                })
                .collect(),
            representable_in_default_library: spec.representable(&LibraryConfig::default()),
            dt: sim.dt,
            duration: sim.duration,
            noise_sigma: sim.noise_sigma,
            signal_seed,
            noise_seed,
        }
    }

    pub fn support(&self, state: usize) -> BTreeSet<String> {
        self.equations[state].iter().map(|t| t.term.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub duration: f64,
    pub dt: f64,
    pub noise_sigma: f64,
}

/// RK4 on the sample grid with the forcing evaluated exactly inside each
/// step, then optional measurement noise `N(0, noise_sigma · column std)` on
/// the states. Returns `duration/dt + 1` rows including the input column.
pub fn simulate(spec: &PlantSpec, signal: &PerturbationSignal, dt: f64, noise_sigma: f64, seed: u64) -> Result<TimeSeriesDataset> {
    simulate_from(spec, &spec.initial_state, signal, dt, noise_sigma, seed)
}

pub fn simulate_from(
    spec: &PlantSpec,
    x0: &[f64],
    signal: &PerturbationSignal,
    dt: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<TimeSeriesDataset> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::Parameter(format!("noise sigma must be non-negative, got {noise_sigma}")));
    }
    if x0.len() != spec.n_states() {
        return Err(Error::Shape(format!("initial state has {} entries", x0.len())));
    }
    let span = signal.span();
    let steps = (span / dt).round() as usize;
    if ((steps as f64) * dt - span).abs() > 1e-9 * span {
        return Err(Error::Parameter(format!("signal span {span} is not a multiple of dt {dt}")));
    }
    let n = spec.n_states();
    let m = steps + 1;
    let times: Vec<f64> = (0..m).map(|i| i as f64 * dt).collect();
    let mut states = Array2::zeros((m, n));
    let mut input = Array1::zeros(m);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    for i in 0..m {
        for j in 0..n {
            states[[i, j]] = x[j];
        }
        input[i] = signal.sample(times[i])?;
        if i == steps {
            break;
        }
        // The whole step uses the segment containing its midpoint, so steps
        // at grid points are seen from the right side only.
        let seg = signal.segment_index((times[i] + 0.5 * dt).min(span))?;
        let mut rhs = |t: f64, y: &[f64], out: &mut [f64]| {
            spec.derivative(y, signal.eval_in_segment(seg, t), out);
        };
        rk4_step(&mut rhs, times[i], &x, dt, &mut next);
        if next.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
            return Err(Error::Divergence { time: times[i + 1] });
        }
        x.copy_from_slice(&next);
    }
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for j in 0..n {
            let col = states.column(j);
            let mean = col.sum() / m as f64;
            let std = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64).sqrt();
            if std == 0.0 {
                continue;
            }
            let dist = Normal::new(0.0, noise_sigma * std).map_err(|e| Error::Parameter(e.to_string()))?;
            for i in 0..m {
                states[[i, j]] += dist.sample(&mut rng);
            }
        }
    }
    TimeSeriesDataset::new(spec.state_names.clone(), spec.input_name.clone(), times, states, input)
}

fn term(coefficient: f64, exponents: &[u32]) -> TruthTerm {
    TruthTerm { coefficient, exponents: exponents.to_vec() }
}

/// Built-in surrogate plants.
pub fn builtin_plants() -> Vec<PlantSpec> {
    vec![forced_linear_2(), forced_vanderpol(), mix_cascade_4()]
}

pub fn builtin_plant(name: &str) -> Result<PlantSpec> {
    builtin_plants().into_iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<String> = builtin_plants().into_iter().map(|p| p.name).collect();
        Error::Schema(format!("unknown plant `{name}`; available: {}", names.join(", ")))
    })
}

/// Lightly damped oscillator driven by the input:
/// `ẋ1 = x2`, `ẋ2 = −x1 − 0.1 x2 + 0.002 u`.
pub fn forced_linear_2() -> PlantSpec {
    PlantSpec {
        name: "forced-linear-2".into(),
        state_names: vec!["x1".into(), "x2".into()],
        input_name: "u".into(),
        rhs: vec![vec![term(1.0, &[0, 1, 0])], vec![term(-1.0, &[1, 0, 0]), term(-0.1, &[0, 1, 0]), term(0.002, &[0, 0, 1])]],
        initial_state: vec![4.0, 0.0],
        training_bounds: (1000.0, 3000.0),
        outside_bounds: (3000.0, 4000.0),
    }
}

/// Van der Pol oscillator (μ = 1) with additive forcing. The `x1² x2` term
/// has degree 3, so the default library cannot represent this plant.
pub fn forced_vanderpol() -> PlantSpec {
    PlantSpec {
        name: "forced-vanderpol".into(),
        state_names: vec!["x1".into(), "x2".into()],
        input_name: "u".into(),
        rhs: vec![
            vec![term(1.0, &[0, 1, 0])],
            vec![term(1.0, &[0, 1, 0]), term(-1.0, &[2, 1, 0]), term(-1.0, &[1, 0, 0]), term(0.002, &[0, 0, 1])],
        ],
        initial_state: vec![4.0, 0.0],
        training_bounds: (1000.0, 3000.0),
        outside_bounds: (3000.0, 4000.0),
    }
}

/// Four stirred tanks in series fed at flow `u`, with dilution `0.001 u`, a
/// bimolecular reaction `c1 + c2 → c3` and first-order decay downstream.
pub fn mix_cascade_4() -> PlantSpec {
    PlantSpec {
        name: "mix-cascade-4".into(),
        state_names: vec!["c1".into(), "c2".into(), "c3".into(), "c4".into()],
        input_name: "F".into(),
        rhs: vec![
            vec![term(0.002, &[0, 0, 0, 0, 1]), term(-0.001, &[1, 0, 0, 0, 1]), term(-0.5, &[1, 0, 0, 0, 0])],
            vec![term(0.001, &[1, 0, 0, 0, 1]), term(-0.001, &[0, 1, 0, 0, 1]), term(-0.4, &[1, 1, 0, 0, 0])],
            vec![term(0.001, &[0, 1, 0, 0, 1]), term(-0.001, &[0, 0, 1, 0, 1]), term(0.4, &[1, 1, 0, 0, 0]), term(-0.3, &[0, 0, 1, 0, 0])],
            vec![term(0.001, &[0, 0, 1, 0, 1]), term(-0.001, &[0, 0, 0, 1, 1]), term(0.3, &[0, 0, 1, 0, 0]), term(-0.2, &[0, 0, 0, 1, 0])],
        ],
        initial_state: vec![1.0, 0.5, 0.3, 0.3],
        training_bounds: (1000.0, 3000.0),
        outside_bounds: (3000.0, 4000.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_kinds(seed: u64) -> PerturbationSignal {
        generate_signal(100.0, 1.0, (1000.0, 3000.0), &SegmentKind::ALL, seed).unwrap()
    }

    #[test]
    fn segment_count_and_bounds() {
        let sig = all_kinds(7);
        assert_eq!(sig.segments.len(), 100);
        for i in 0..=10_000 {
            let v = sig.sample(i as f64 * 0.01).unwrap();
            assert!((1000.0..=3000.0).contains(&v), "{v}");
        }
        let kinds: BTreeSet<SegmentKind> = sig.segments.iter().map(|s| s.kind).collect();
        assert_eq!(kinds.len(), 3);
    }

    #[test]
    fn signal_parameter_errors() {
        assert!(generate_signal(10.0, 1.0, (3.0, 1.0), &SegmentKind::ALL, 0).is_err());
        assert!(generate_signal(10.0, 1.0, (1.0, 1.0), &SegmentKind::ALL, 0).is_err());
        assert!(generate_signal(10.5, 1.0, (1.0, 2.0), &SegmentKind::ALL, 0).is_err());
        assert!(generate_signal(10.0, 1.0, (1.0, 2.0), &[], 0).is_err());
    }

    #[test]
    fn sampling_rules() {
        let sig = PerturbationSignal {
            segments: vec![
                Segment { kind: SegmentKind::Step, duration: 1.0, start_level: 5.0, end_level: 5.0 },
                Segment { kind: SegmentKind::LinearRamp, duration: 1.0, start_level: 5.0, end_level: 9.0 },
                Segment { kind: SegmentKind::SigmoidRamp, duration: 2.0, start_level: 9.0, end_level: 1.0 },
                Segment { kind: SegmentKind::Step, duration: 1.0, start_level: 1.0, end_level: 1.0 },
            ],
            bounds: (0.0, 10.0),
            seed: 0,
        };
        assert_eq!(sig.sample(0.3).unwrap(), 5.0);
        assert_eq!(sig.sample(1.5).unwrap(), 7.0);
        assert!((sig.sample(3.0).unwrap() - 5.0).abs() < 1e-12);
        assert!((sig.sample(2.0).unwrap() - 9.0).abs() < 1e-12);
        assert!((sig.sample(4.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(sig.sample(4.5).unwrap(), 1.0);
        assert!(matches!(sig.sample(5.5), Err(Error::Range { .. })));
        assert!(matches!(sig.sample(-0.1), Err(Error::Range { .. })));
    }

    #[test]
    fn sigmoid_is_symmetric() {
        for tau in [0.0, 0.1, 0.3, 0.45] {
            assert!((sigmoid_shape(tau) + sigmoid_shape(1.0 - tau) - 1.0).abs() < 1e-12);
        }
        assert!(sigmoid_shape(0.0).abs() < 1e-15);
        assert!((sigmoid_shape(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_plant_settles_at_fixed_point() {
        let spec = PlantSpec {
            name: "decay".into(),
            state_names: vec!["x".into()],
            input_name: "u".into(),
            rhs: vec![vec![term(-1.0, &[1, 0]), term(0.001, &[0, 1])]],
            initial_state: vec![1.0],
            training_bounds: (999.0, 1001.0),
            outside_bounds: (1001.0, 1002.0),
        };
        let sig = PerturbationSignal {
            segments: vec![Segment { kind: SegmentKind::Step, duration: 20.0, start_level: 1000.0, end_level: 1000.0 }],
            bounds: (999.0, 1001.0),
            seed: 0,
        };
        let ds = simulate(&spec, &sig, 0.01, 0.0, 0).unwrap();
        assert!((ds.states()[[ds.len() - 1, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_size_and_determinism() {
        let spec = forced_linear_2();
        let sig = all_kinds(3);
        let a = simulate(&spec, &sig, 0.01, 0.01, 9).unwrap();
        assert_eq!(a.len(), 10_001);
        let b = simulate(&spec, &sig, 0.01, 0.01, 9).unwrap();
        assert_eq!(a, b);
        let c = simulate(&spec, &sig, 0.01, 0.01, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn divergence_reports_time() {
        let spec = PlantSpec {
            name: "growth".into(),
            state_names: vec!["x".into()],
            input_name: "u".into(),
            rhs: vec![vec![term(1.0, &[2, 0])]],
            initial_state: vec![1.0],
            training_bounds: (0.0, 1.0),
            outside_bounds: (1.0, 2.0),
        };
        let sig = generate_signal(5.0, 1.0, (0.0, 1.0), &[SegmentKind::Step], 0).unwrap();
        match simulate(&spec, &sig, 0.01, 0.0, 0) {
            Err(Error::Divergence { time }) => assert!(time > 0.9 && time < 1.1, "{time}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn builtin_catalogue() {
        let plants = builtin_plants();
        assert!(plants.len() >= 3);
        let lin = builtin_plant("forced-linear-2").unwrap();
        assert_eq!(lin.truth_displays()[0], vec!["x2".to_string()]);
        let cfg = LibraryConfig::default();
        assert!(lin.representable(&cfg));
        assert!(builtin_plant("mix-cascade-4").unwrap().representable(&cfg));
        assert!(!builtin_plant("forced-vanderpol").unwrap().representable(&cfg));
        assert!(builtin_plant("nope").is_err());
    }

    #[test]
    fn linear_plant_normalized_support_has_no_constant() {
        let spec = forced_linear_2();
        let ds = simulate(&spec, &all_kinds(1), 0.01, 0.0, 0).unwrap();
        let lib = CandidateLibrary::build(&spec.variable_names(), &LibraryConfig::default()).unwrap();
        let support = spec.normalized_support(&ds, &lib).unwrap();
        let s0: Vec<String> = support[0].clone().unwrap().into_iter().collect();
        assert_eq!(s0, vec!["x2".to_string()]);
        let s1: Vec<String> = support[1].clone().unwrap().into_iter().collect();
        assert_eq!(s1, vec!["u".to_string(), "x1".to_string(), "x2".to_string()]);
    }
}
