//! The run configuration shared by every command.
//!
//! A JSON object with the keys of [`RunConfig`]; absent keys take their
//! defaults and unknown keys are rejected. Randomness is fanned out from the
//! single `seed` by [`derive_seed`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::data::DiffMethod;
use crate::error::{Error, Result};
use crate::library::{LibraryConfig, UnaryFn};
use crate::plant::SegmentKind;
use crate::regression::PathSettings;
use crate::selection::{ScoreWeights, SelectionMethod};
use crate::tvdiff::{DiffSettings, TvParams};

/// First eight bytes (little endian) of `sha256(seed_le ‖ label)`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub plant: Option<String>,
    pub dataset: Option<PathBuf>,
    pub input_column: Option<String>,
    pub out_dir: PathBuf,

    pub duration: f64,
    pub dt: f64,
    pub segment_duration: f64,
    pub perturbation_kinds: Vec<SegmentKind>,
    pub training_bounds: Option<(f64, f64)>,
    pub outside_bounds: Option<(f64, f64)>,
    pub noise_sigma: f64,

    pub diff: DiffMethod,
    pub tv_reg: f64,
    pub tv_iters: usize,

    pub max_total_degree: u32,
    pub min_exponent: i32,
    pub max_exponent: i32,
    pub include_constant: bool,
    pub unary_fns: Vec<UnaryFn>,

    pub n_lambdas: usize,
    pub lambda_min_ratio: f64,
    pub lasso_tol: f64,
    pub lasso_max_iters: usize,
    pub standardize: bool,

    pub selection: SelectionMethod,
    pub score_alpha: f64,
    pub score_beta: f64,

    pub long_time_factor: f64,
    pub model: Option<PathBuf>,
    pub models: Vec<PathBuf>,
    pub system_ids: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lib = LibraryConfig::default();
        let path = PathSettings::default();
        let tv = TvParams::default();
        let w = ScoreWeights::default();
        Self {
            seed: 0,
            plant: None,
            dataset: None,
            input_column: None,
            out_dir: PathBuf::from("out"),
            duration: 100.0,
            dt: 0.01,
            segment_duration: 1.0,
            perturbation_kinds: SegmentKind::ALL.to_vec(),
            training_bounds: None,
            outside_bounds: None,
            noise_sigma: 0.0,
            diff: DiffMethod::TvRegularized,
            tv_reg: tv.reg,
            tv_iters: tv.iterations,
            max_total_degree: lib.max_total_degree,
            min_exponent: lib.min_exponent,
            max_exponent: lib.max_exponent,
            include_constant: lib.include_constant,
            unary_fns: lib.unary_fns,
            n_lambdas: path.n_lambdas,
            lambda_min_ratio: path.lambda_min_ratio,
            lasso_tol: path.tol,
            lasso_max_iters: path.max_iters,
            standardize: path.standardize,
            selection: SelectionMethod::CvPeak,
            score_alpha: w.score_alpha,
            score_beta: w.score_beta,
            long_time_factor: 2.5,
            model: None,
            models: vec![],
            system_ids: vec![],
        }
    }
}

/// Every config key with a one-line description, in file order.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("seed", "top-level seed; signal, noise and split seeds are derived from it"),
    ("plant", "builtin plant to simulate (forced-linear-2, forced-vanderpol, mix-cascade-4)"),
    ("dataset", "dataset CSV to fit or evaluate; defaults to <out_dir>/dataset.csv"),
    ("input_column", "name of the forcing column in an external CSV; defaults to the plant's input or `u`"),
    ("out_dir", "directory all commands write into"),
    ("duration", "simulated time span of the training run"),
    ("dt", "sampling interval and integration step"),
    ("segment_duration", "length of each perturbation segment"),
    ("perturbation_kinds", "segment kinds to draw from: step, linear-ramp, sigmoid-ramp"),
    ("training_bounds", "[lo, hi] amplitude band of the training forcing; plant default when null"),
    ("outside_bounds", "[lo, hi] amplitude band for the outside-perturbation test; plant default when null"),
    ("noise_sigma", "measurement noise, as a fraction of each state's standard deviation"),
    ("diff", "differentiation method: tv (alias of tv-regularized) or central (central-difference)"),
    ("tv_reg", "TV regularization weight, relative to unit signal amplitude"),
    ("tv_iters", "maximum TV outer iterations"),
    ("max_total_degree", "largest total degree sum|a_j| of power-product terms"),
    ("min_exponent", "smallest exponent on any variable"),
    ("max_exponent", "largest exponent on any variable"),
    ("include_constant", "include the constant term"),
    ("unary_fns", "unary functions applied to each variable: sin, cos, log-abs, exp, sqrt-abs"),
    ("n_lambdas", "number of penalties on the regularization path"),
    ("lambda_min_ratio", "smallest penalty as a fraction of lambda_max"),
    ("lasso_tol", "coordinate descent stopping tolerance on the largest scaled update"),
    ("lasso_max_iters", "coordinate descent sweep limit per penalty"),
    ("standardize", "scale library columns to unit RMS before the LASSO"),
    ("selection", "model selection: cv-peak or score"),
    ("score_alpha", "weight of the term count in the selection score"),
    ("score_beta", "weight of ln(cv R2) in the selection score"),
    ("long_time_factor", "duration multiplier of the long-time test"),
    ("model", "model file to evaluate or render; defaults to <out_dir>/model.json"),
    ("models", "model files to compare (at least two)"),
    ("system_ids", "labels for the compared models; file stems when empty"),
];

/// `--help` text listing every key with its default.
pub fn config_help() -> String {
    let defaults = serde_json::to_value(RunConfig::default()).expect("default config serializes");
    let w = CONFIG_KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::from("Config keys (JSON object; command-line flags and --set override the file; unknown keys are errors):\n");
    for (key, doc) in CONFIG_KEYS {
        let d = defaults.get(*key).map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("  {key:<w$}  {doc} [default: {d}]\n"));
    }
    out
}

fn parse_override(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl RunConfig {
    /// Parses config text; errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("config: {e}")))
    }

    /// Reads `path` (defaults when `None`) and applies `key=value`
    /// overrides. Values are parsed as JSON, falling back to a string.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::from(e).context(p.display().to_string()))?;
                Self::from_json(&text).map_err(|e| e.context(p.display().to_string()))?
            }
            None => Self::default(),
        };
        base.with_overrides(overrides)
    }

    pub fn with_overrides(self, overrides: &[(String, String)]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let Value::Object(mut map) = serde_json::to_value(&self)? else { unreachable!("config serializes to an object") };
        for (k, v) in overrides {
            if !CONFIG_KEYS.iter().any(|(key, _)| key == k) {
                return Err(Error::Schema(format!("unknown config key `{k}`")));
            }
            let mut one = Map::new();
            one.insert(k.clone(), parse_override(v));
            // Type-check each override on its own so the error names the key.
            serde_json::from_value::<Self>(Value::Object(one.clone())).map_err(|e| Error::Schema(format!("override `{k}={v}`: {e}")))?;
            map.extend(one);
        }
        Ok(serde_json::from_value(Value::Object(map))?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration", self.duration),
            ("dt", self.dt),
            ("segment_duration", self.segment_duration),
            ("tv_reg", self.tv_reg),
            ("lasso_tol", self.lasso_tol),
            ("long_time_factor", self.long_time_factor),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Schema(format!("`{k}` must be positive, got {v}")));
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Schema(format!("`noise_sigma` must be non-negative, got {}", self.noise_sigma)));
        }
        if self.perturbation_kinds.is_empty() {
            return Err(Error::Schema("`perturbation_kinds` is empty".into()));
        }
        for (k, b) in [("training_bounds", self.training_bounds), ("outside_bounds", self.outside_bounds)] {
            if let Some((lo, hi)) = b {
                if !(lo < hi) {
                    return Err(Error::Schema(format!("`{k}` needs lo < hi, got [{lo}, {hi}]")));
                }
            }
        }
        if self.tv_iters == 0 || self.lasso_max_iters == 0 {
            return Err(Error::Schema("iteration limits must be at least 1".into()));
        }
        if self.n_lambdas < 2 {
            return Err(Error::Schema("`n_lambdas` must be at least 2".into()));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::Schema("`lambda_min_ratio` must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn library(&self) -> LibraryConfig {
        LibraryConfig {
            max_total_degree: self.max_total_degree,
            min_exponent: self.min_exponent,
            max_exponent: self.max_exponent,
            include_constant: self.include_constant,
            unary_fns: self.unary_fns.clone(),
        }
    }

    pub fn path(&self) -> PathSettings {
        PathSettings {
            n_lambdas: self.n_lambdas,
            lambda_min_ratio: self.lambda_min_ratio,
            tol: self.lasso_tol,
            max_iters: self.lasso_max_iters,
            standardize: self.standardize,
        }
    }

    pub fn diff_settings(&self) -> DiffSettings {
        DiffSettings { method: self.diff, tv: TvParams { reg: self.tv_reg, iterations: self.tv_iters, ..TvParams::default() } }
    }

    pub fn weights(&self) -> ScoreWeights {
        ScoreWeights { score_alpha: self.score_alpha, score_beta: self.score_beta }
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.out_dir.join("dataset.csv"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out_dir.join("model.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_is_documented() {
        let v = serde_json::to_value(RunConfig::default()).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), CONFIG_KEYS.len());
        for k in keys {
            assert!(CONFIG_KEYS.iter().any(|(d, _)| d == k), "{k} undocumented");
        }
        let help = config_help();
        assert!(help.contains("long_time_factor") && help.contains("[default: 2.5]"));
    }

    #[test]
    fn unknown_keys_fail_with_position() {
        let err = RunConfig::from_json("{\n  \"seed\": 3,\n  \"sed\": 4\n}").unwrap_err().to_string();
        assert!(err.contains("unknown field `sed`") && err.contains("line 3"), "{err}");
        let c = RunConfig::from_json("{\"plant\": \"forced-linear-2\", \"diff\": \"central\"}").unwrap();
        assert_eq!(c.diff, DiffMethod::CentralDifference);
        assert_eq!(c.duration, 100.0);
    }

    #[test]
    fn overrides() {
        let c = RunConfig::default()
            .with_overrides(&[
                ("tv_reg".into(), "0.01".into()),
                ("plant".into(), "forced-linear-2".into()),
                ("training_bounds".into(), "[1, 2]".into()),
                ("selection".into(), "score".into()),
            ])
            .unwrap();
        assert_eq!(c.tv_reg, 0.01);
        assert_eq!(c.plant.as_deref(), Some("forced-linear-2"));
        assert_eq!(c.training_bounds, Some((1.0, 2.0)));
        assert_eq!(c.selection, SelectionMethod::ComplexityScore);
        assert!(RunConfig::default().with_overrides(&[("nope".into(), "1".into())]).is_err());
        let err = RunConfig::default().with_overrides(&[("dt".into(), "fast".into())]).unwrap_err();
        assert!(err.to_string().contains("dt=fast"));
    }

    #[test]
    fn seeds_differ_by_label() {
        assert_eq!(derive_seed(7, "signal"), derive_seed(7, "signal"));
        assert_ne!(derive_seed(7, "signal"), derive_seed(7, "noise"));
        assert_ne!(derive_seed(7, "signal"), derive_seed(8, "signal"));
    }
}
