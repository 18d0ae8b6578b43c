//! Time-series data model: ingestion, normalization and row splitting.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Name of the mandatory time column in dataset files.
pub const TIME_COLUMN: &str = "time";

/// Relative tolerance on the sampling interval.
pub const GRID_TOLERANCE: f64 = 1e-9;

/// Uniformly sampled states `X(t)` (m×n) together with the scalar forcing `u(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    names: Vec<String>,
    input_name: String,
    times: Vec<f64>,
    states: Array2<f64>,
    input: Array1<f64>,
    dt: f64,
}

impl TimeSeriesDataset {
    /// Builds a dataset, checking shapes, finiteness and grid uniformity.
    pub fn new(
        names: Vec<String>,
        input_name: impl Into<String>,
        times: Vec<f64>,
        states: Array2<f64>,
        input: Array1<f64>,
    ) -> Result<Self> {
        let input_name = input_name.into();
        let m = times.len();
        if m < 2 {
            return Err(Error::InsufficientData(format!("a dataset needs at least 2 samples, got {m}")));
        }
        if states.nrows() != m || input.len() != m {
            return Err(Error::Shape(format!("{} times, {} state rows, {} input samples", m, states.nrows(), input.len())));
        }
        if states.ncols() != names.len() {
            return Err(Error::Shape(format!("{} state names for {} state columns", names.len(), states.ncols())));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in names.iter().chain(std::iter::once(&input_name)) {
            if name == TIME_COLUMN || !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate or reserved column name `{name}`")));
            }
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::Data { row: i, column: TIME_COLUMN.into(), reason: "non-finite value".into() });
            }
        }
        for ((i, j), v) in states.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::Data { row: i, column: names[j].clone(), reason: "non-finite value".into() });
            }
        }
        for (i, v) in input.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Data { row: i, column: input_name.clone(), reason: "non-finite value".into() });
            }
        }
        let dt = check_uniform_grid(&times)?;
        Ok(Self { names, input_name, times, states, input, dt })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn input_name(&self) -> &str {
        &self.input_name
    }

    /// State names followed by the input name.
    pub fn variable_names(&self) -> Vec<String> {
        let mut v = self.names.clone();
        v.push(self.input_name.clone());
        v
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &Array2<f64> {
        &self.states
    }

    pub fn input(&self) -> &Array1<f64> {
        &self.input
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of samples `m`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of states `n`.
    pub fn n_states(&self) -> usize {
        self.names.len()
    }

    pub fn duration(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// States and input side by side, `m × (n+1)`.
    pub fn variables(&self) -> Array2<f64> {
        let (m, n) = self.states.dim();
        let mut out = Array2::zeros((m, n + 1));
        out.slice_mut(ndarray::s![.., ..n]).assign(&self.states);
        out.column_mut(n).assign(&self.input);
        out
    }

    /// Content hash over names and the exact bit patterns of every value.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for name in self.variable_names() {
            h.update(name.as_bytes());
            h.update([0u8]);
        }
        for t in &self.times {
            h.update(t.to_bits().to_le_bytes());
        }
        for v in self.states.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        for v in self.input.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        digest[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Reads a dataset from CSV text. All columns except `time` and
    /// `input_column` become states, in header order.
    pub fn read_csv<R: Read>(reader: R, input_column: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let time_idx =
            headers.iter().position(|h| h == TIME_COLUMN).ok_or_else(|| Error::Schema(format!("missing `{TIME_COLUMN}` column")))?;
        let input_idx = headers
            .iter()
            .position(|h| h == input_column)
            .ok_or_else(|| Error::Schema(format!("missing input column `{input_column}`")))?;
        let state_idx: Vec<usize> = (0..headers.len()).filter(|&i| i != time_idx && i != input_idx).collect();
        if state_idx.is_empty() {
            return Err(Error::Schema("no state columns".into()));
        }

        let mut times = Vec::new();
        let mut input = Vec::new();
        let mut flat = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(Error::Data {
                    row,
                    column: String::new(),
                    reason: format!("expected {} fields, found {}", headers.len(), rec.len()),
                });
            }
            let cell = |i: usize| -> Result<f64> { parse_cell(&rec[i], row, &headers[i]) };
            times.push(cell(time_idx)?);
            input.push(cell(input_idx)?);
            for &i in &state_idx {
                flat.push(cell(i)?);
            }
        }
        let m = times.len();
        let states = Array2::from_shape_vec((m, state_idx.len()), flat).map_err(|e| Error::Shape(e.to_string()))?;
        let names = state_idx.iter().map(|&i| headers[i].clone()).collect();
        Self::new(names, input_column, times, states, Array1::from(input))
    }

    /// Reads a dataset file; see [`TimeSeriesDataset::read_csv`].
    pub fn ingest_csv(path: impl AsRef<Path>, input_column: &str) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::read_csv(std::io::BufReader::new(file), input_column)
    }

    /// Writes `time, states..., input` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![TIME_COLUMN.to_string()];
        header.extend(self.variable_names());
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            row.clear();
            row.push(format_value(self.times[i]));
            row.extend(self.states.row(i).iter().map(|&v| format_value(v)));
            row.push(format_value(self.input[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Returns a copy with the state and input values replaced.
    pub(crate) fn with_values(&self, states: Array2<f64>, input: Array1<f64>) -> Result<Self> {
        Self::new(self.names.clone(), self.input_name.clone(), self.times.clone(), states, input)
    }
}

/// Formats a value with 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_cell(s: &str, row: usize, column: &str) -> Result<f64> {
    let err = |reason: &str| Error::Data { row, column: column.to_string(), reason: reason.to_string() };
    if s.is_empty() {
        return Err(err("empty cell"));
    }
    let v: f64 = s.parse().map_err(|_| err(&format!("cannot parse `{s}`")))?;
    if !v.is_finite() {
        return Err(err("non-finite value"));
    }
    Ok(v)
}

fn check_uniform_grid(times: &[f64]) -> Result<f64> {
    let m = times.len();
    let dt = (times[m - 1] - times[0]) / (m - 1) as f64;
    if dt <= 0.0 {
        return Err(Error::Grid("times are not strictly increasing".into()));
    }
    for (i, w) in times.windows(2).enumerate() {
        let step = w[1] - w[0];
        if step <= 0.0 {
            return Err(Error::Grid(format!("times not strictly increasing at row {}", i + 1)));
        }
        if (step - dt).abs() > GRID_TOLERANCE * dt {
            return Err(Error::Grid(format!("spacing {step} at row {} differs from dt = {dt}", i + 1)));
        }
    }
    Ok(dt)
}

/// Mean and population standard deviation of a single column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub scale: f64,
}

impl ColumnStats {
    /// Population statistics (divisor m); rejects zero-variance columns.
    pub fn compute(column: ArrayView1<f64>, name: &str) -> Result<Self> {
        let m = column.len() as f64;
        let mean = column.sum() / m;
        let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        let scale = var.sqrt();
        let magnitude = column.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(scale > 1e-14 * magnitude) || scale == 0.0 {
            return Err(Error::DegenerateColumn(name.to_string()));
        }
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.scale
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.scale + self.mean
    }

    pub fn identity() -> Self {
        Self { mean: 0.0, scale: 1.0 }
    }
}

/// Per-variable autoscaling statistics (states first, then the input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl NormalizationStats {
    pub fn column(&self, j: usize) -> ColumnStats {
        ColumnStats { mean: self.means[j], scale: self.scales[j] }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    /// Statistics that leave data unchanged.
    pub fn identity(names: Vec<String>) -> Self {
        let n = names.len();
        Self { names, means: vec![0.0; n], scales: vec![1.0; n] }
    }

    /// Normalizes a dataset whose variables match these statistics by name.
    pub fn apply(&self, ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        self.check_names(ds)?;
        let n = ds.n_states();
        let mut states = ds.states().clone();
        for (j, mut col) in states.axis_iter_mut(Axis(1)).enumerate() {
            let s = self.column(j);
            col.mapv_inplace(|v| s.apply(v));
        }
        let s = self.column(n);
        let input = ds.input().mapv(|v| s.apply(v));
        ds.with_values(states, input)
    }

    pub fn invert(&self, ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        self.check_names(ds)?;
        let n = ds.n_states();
        let mut states = ds.states().clone();
        for (j, mut col) in states.axis_iter_mut(Axis(1)).enumerate() {
            let s = self.column(j);
            col.mapv_inplace(|v| s.invert(v));
        }
        let s = self.column(n);
        let input = ds.input().mapv(|v| s.invert(v));
        ds.with_values(states, input)
    }

    fn check_names(&self, ds: &TimeSeriesDataset) -> Result<()> {
        let names = ds.variable_names();
        if names != self.names {
            return Err(Error::Schema(format!("dataset variables {names:?} do not match normalization variables {:?}", self.names)));
        }
        Ok(())
    }
}

/// Mean-shifts and autoscales every state column and the input column.
pub fn normalize(ds: &TimeSeriesDataset) -> Result<(TimeSeriesDataset, NormalizationStats)> {
    let names = ds.variable_names();
    let mut means = Vec::with_capacity(names.len());
    let mut scales = Vec::with_capacity(names.len());
    for (j, col) in ds.states().axis_iter(Axis(1)).enumerate() {
        let s = ColumnStats::compute(col, &names[j])?;
        means.push(s.mean);
        scales.push(s.scale);
    }
    let s = ColumnStats::compute(ds.input().view(), ds.input_name())?;
    means.push(s.mean);
    scales.push(s.scale);
    let stats = NormalizationStats { names, means, scales };
    let normalized = stats.apply(ds)?;
    Ok((normalized, stats))
}

/// Inverse of [`normalize`].
pub fn denormalize(ds: &TimeSeriesDataset, stats: &NormalizationStats) -> Result<TimeSeriesDataset> {
    stats.invert(ds)
}

/// How a [`DerivativeSet`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffMethod {
    #[serde(alias = "tv")]
    TvRegularized,
    #[serde(alias = "central")]
    CentralDifference,
}

impl fmt::Display for DiffMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiffMethod::TvRegularized => f.write_str("tv-regularized"),
            DiffMethod::CentralDifference => f.write_str("central-difference"),
        }
    }
}

/// Time derivatives `Ẋ(t)`, aligned row for row with the source states.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeSet {
    pub derivs: Array2<f64>,
    pub method: DiffMethod,
}

/// Disjoint train / cross-validation / test row sets in 3:1:1 proportion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub cv: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Random row-wise 3:1:1 split, reproducible for a fixed seed.
///
/// `|train| = round(0.6 m)`; the remainder is shared between cv and test,
/// cv taking the extra row when it is odd. Each set is returned sorted.
pub fn split_311(m: usize, seed: u64) -> Result<SplitIndices> {
    if m < 5 {
        return Err(Error::InsufficientData(format!("a 3:1:1 split needs at least 5 rows, got {m}")));
    }
    let n_train = (0.6 * m as f64).round() as usize;
    let rest = m - n_train;
    let n_cv = rest.div_ceil(2);
    let mut idx: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut train = idx[..n_train].to_vec();
    let mut cv = idx[n_train..n_train + n_cv].to_vec();
    let mut test = idx[n_train + n_cv..].to_vec();
    train.sort_unstable();
    cv.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, cv, test, seed })
}
