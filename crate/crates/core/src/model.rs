//! Fitted sparse models and their JSON form.
//!
//! A model lives in the coordinates it was fit in: every variable `v` enters
//! as `z = (v − mean)/scale` and state `i` predicts the autoscaled target
//! `yᵢ = (żᵢ − target.mean)/target.scale = Σⱼ Ξ[j, i] θⱼ(z)`.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnStats, NormalizationStats};
use crate::error::{Error, Result};
use crate::library::{CandidateLibrary, TermKind};
use crate::poly::{self, Polynomial};
use crate::regression::PathSettings;
use crate::selection::{ScoreWeights, SelectionMethod, SelectionReport};
use crate::tvdiff::DiffSettings;

/// How a model was produced, kept so that evaluation can reproduce the
/// derivative targets and the row split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitProvenance {
    pub diff: DiffSettings,
    pub path: PathSettings,
    pub split_seed: u64,
    pub selection: SelectionMethod,
    pub weights: ScoreWeights,
    /// Per state: did the TV outer loop meet its tolerance.
    pub diff_converged: Vec<bool>,
    pub n_rows: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseModel {
    pub state_names: Vec<String>,
    pub input_name: String,
    pub library: CandidateLibrary,
    /// `coefficients[i][j]` is `Ξ[j, i]`: term `j` in the equation of state `i`.
    pub coefficients: Vec<Vec<f64>>,
    /// Selected λ per state; `None` for hand-built models.
    pub lambdas: Vec<Option<f64>>,
    pub norm_stats: NormalizationStats,
    pub target_stats: Vec<ColumnStats>,
    /// Fingerprint of the dataset the model was fit on.
    pub fitted_on: String,
    pub train_r2: Vec<Option<f64>>,
    pub selections: Vec<SelectionReport>,
    pub provenance: Option<FitProvenance>,
}

impl SparseModel {
    /// A model with identity statistics, for hand-specified equations
    /// `żᵢ = Σⱼ Ξ[j, i] θⱼ(z)` acting directly on raw values.
    pub fn from_coefficients(library: CandidateLibrary, n_states: usize, coefficients: Vec<Vec<f64>>) -> Result<Self> {
        let names = library.variable_names.clone();
        if names.len() != n_states + 1 {
            return Err(Error::Shape(format!("library has {} variables, expected {} states plus the input", names.len(), n_states)));
        }
        let model = Self {
            state_names: names[..n_states].to_vec(),
            input_name: names[n_states].clone(),
            norm_stats: NormalizationStats::identity(names),
            target_stats: vec![ColumnStats::identity(); n_states],
            library,
            coefficients,
            lambdas: vec![None; n_states],
            fitted_on: String::new(),
            train_r2: vec![None; n_states],
            selections: vec![],
            provenance: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    /// Shape and naming consistency between the parts.
    pub fn validate(&self) -> Result<()> {
        self.library.validate()?;
        let n = self.n_states();
        let mut names = self.state_names.clone();
        names.push(self.input_name.clone());
        if self.library.variable_names != names {
            return Err(Error::Schema(format!(
                "library variables {:?} differ from model variables {names:?}",
                self.library.variable_names
            )));
        }
        if self.norm_stats.names != names || self.norm_stats.means.len() != n + 1 || self.norm_stats.scales.len() != n + 1 {
            return Err(Error::Schema("normalization statistics do not match the model variables".into()));
        }
        let k = self.library.len();
        if self.coefficients.len() != n || self.coefficients.iter().any(|c| c.len() != k) {
            return Err(Error::Shape(format!("coefficients must be {n} columns of {k} entries")));
        }
        if self.target_stats.len() != n || self.lambdas.len() != n || self.train_r2.len() != n {
            return Err(Error::Shape(format!("per-state metadata must have {n} entries")));
        }
        if self.coefficients.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Schema("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// `Ξ` as a k × n matrix.
    pub fn xi(&self) -> Array2<f64> {
        let k = self.library.len();
        Array2::from_shape_fn((k, self.n_states()), |(j, i)| self.coefficients[i][j])
    }

    /// Library indices with exactly non-zero coefficients in state `i`.
    pub fn support_indices(&self, i: usize) -> Vec<usize> {
        self.coefficients[i].iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(j, _)| j).collect()
    }

    pub fn support_names(&self, i: usize) -> BTreeSet<String> {
        self.support_indices(i).into_iter().map(|j| self.library.terms[j].display.clone()).collect()
    }

    pub fn state_index(&self, name: &str) -> Result<usize> {
        self.state_names.iter().position(|s| s == name).ok_or_else(|| Error::Schema(format!("model has no state `{name}`")))
    }

    /// Copy with the coefficient of `term` in state `state` set to zero.
    pub fn without_term(&self, state: usize, term: &str) -> Result<Self> {
        let j = self.library.index_of(term).ok_or_else(|| Error::Schema(format!("library has no term `{term}`")))?;
        let mut out = self.clone();
        out.coefficients[state][j] = 0.0;
        Ok(out)
    }

    /// The equation of state `i` in raw variables, `ẋᵢ` as a polynomial in
    /// states then input. Fails when a supported term is not a
    /// non-negative power product.
    pub fn raw_polynomial(&self, i: usize) -> Result<Polynomial> {
        let nv = self.library.variable_names.len();
        let inv: Vec<f64> = self.norm_stats.scales.iter().map(|s| 1.0 / s).collect();
        let shift: Vec<f64> = self.norm_stats.means.iter().zip(&self.norm_stats.scales).map(|(m, s)| -m / s).collect();
        let target = self.target_stats[i];
        let sx = self.norm_stats.scales[i];
        let mut acc = poly::constant(nv, target.mean * sx);
        for j in self.support_indices(i) {
            let t = &self.library.terms[j];
            let exps: Vec<u32> = match &t.kind {
                TermKind::Constant => vec![0; nv],
                TermKind::PowerProduct { exponents } if exponents.iter().all(|&e| e >= 0) => exponents.iter().map(|&e| e as u32).collect(),
                _ => return Err(Error::Parameter(format!("term `{}` has no polynomial form in raw variables", t.display))),
            };
            let p = poly::expand_affine_monomial(&exps, &inv, &shift);
            poly::add_scaled(&mut acc, &p, self.coefficients[i][j] * target.scale * sx);
        }
        Ok(acc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::from(e).context(path.display().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        Self::from_json(&text).map_err(|e| e.context(path.display().to_string()))
    }
}
