//! Picking one model per state from a regularization path.

use std::fmt;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{PathEntry, RegularizationPath};

/// Coefficient of determination `1 − SS_res / SS_tot`, `SS_tot` about the
/// mean of `actual`. Not clamped: worse-than-mean predictions are negative.
pub fn r_squared(actual: ArrayView1<f64>, predicted: ArrayView1<f64>) -> Result<f64> {
    assert_eq!(actual.len(), predicted.len());
    let n = actual.len() as f64;
    let mean = actual.sum() / n;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::UndefinedR2);
    }
    let ss_res: f64 = actual.iter().zip(predicted.iter()).map(|(a, p)| (a - p) * (a - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// R² of a path entry on held-out rows.
pub fn cv_r2(entry: &PathEntry, theta_cv: ArrayView2<f64>, ydot_cv: ArrayView1<f64>) -> Result<f64> {
    let coef = ArrayView1::from(&entry.coefficients[..]);
    let pred = theta_cv.dot(&coef);
    r_squared(ydot_cv, pred.view())
}

/// Fills `cv_r2` on every entry of `path`.
pub fn fill_cv(path: &mut RegularizationPath, theta_cv: ArrayView2<f64>, ydot_cv: ArrayView1<f64>) -> Result<()> {
    for e in &mut path.entries {
        e.cv_r2 = Some(cv_r2(e, theta_cv, ydot_cv)?);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMethod {
    CvPeak,
    #[serde(alias = "score")]
    ComplexityScore,
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMethod::CvPeak => "cv-peak",
            SelectionMethod::ComplexityScore => "complexity-score",
        })
    }
}

/// Path entry left out of scoring, with why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub lambda: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub state_index: usize,
    pub method: SelectionMethod,
    pub chosen_index: usize,
    pub chosen_lambda: f64,
    pub chosen_term_count: usize,
    pub cv_r2: f64,
    pub score: Option<f64>,
    /// False when the last (smallest-λ) entry attains the best CV R².
    pub peak_found: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<Exclusion>,
}

/// Weights of the complexity-penalized score `α·k − β·ln(R²_CV)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreWeights {
    pub score_alpha: f64,
    pub score_beta: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self { score_alpha: -0.05, score_beta: -1.0 }
    }
}

/// `score_alpha·k − score_beta·ln(cv_r2)`; higher is better.
pub fn complexity_score(k: usize, cv_r2: f64, score_alpha: f64, score_beta: f64) -> Result<f64> {
    if !(cv_r2 > 0.0) {
        return Err(Error::Selection(format!("cv R² = {cv_r2} is not positive; its logarithm is undefined")));
    }
    Ok(score_alpha * k as f64 - score_beta * cv_r2.ln())
}

fn filled_cv(path: &RegularizationPath) -> Vec<Option<f64>> {
    path.entries.iter().map(|e| e.cv_r2).collect()
}

fn peak_found(cvs: &[Option<f64>]) -> bool {
    let best = cvs.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    match cvs.last().copied().flatten() {
        Some(last) => last < best,
        None => true,
    }
}

/// Entry with the highest CV R², ties going to the larger λ.
pub fn select_cv_peak(path: &RegularizationPath) -> Result<SelectionReport> {
    let cvs = filled_cv(path);
    let filled = cvs.iter().filter(|c| c.is_some()).count();
    if filled < 3 {
        return Err(Error::Selection(format!(
            "state {}: cv-peak selection needs at least 3 entries with CV R², found {filled}",
            path.state_index
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in cvs.iter().enumerate() {
        if let Some(c) = *c {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((i, c));
            }
        }
    }
    let (idx, cv) = best.expect("at least three filled entries");
    let e = &path.entries[idx];
    Ok(SelectionReport {
        state_index: path.state_index,
        method: SelectionMethod::CvPeak,
        chosen_index: idx,
        chosen_lambda: e.lambda,
        chosen_term_count: e.term_count,
        cv_r2: cv,
        score: None,
        peak_found: peak_found(&cvs),
        excluded: vec![],
    })
}

/// Entry maximizing [`complexity_score`], ties going to the larger λ.
/// Entries with non-positive CV R² are excluded and listed in the report.
pub fn select_by_score(path: &RegularizationPath, weights: ScoreWeights) -> Result<SelectionReport> {
    let mut best: Option<(usize, f64)> = None;
    let mut excluded = Vec::new();
    for (i, e) in path.entries.iter().enumerate() {
        let Some(cv) = e.cv_r2 else {
            excluded.push(Exclusion { lambda: e.lambda, reason: "no CV R²".into() });
            continue;
        };
        match complexity_score(e.term_count, cv, weights.score_alpha, weights.score_beta) {
            Ok(s) => {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((i, s));
                }
            }
            Err(err) => excluded.push(Exclusion { lambda: e.lambda, reason: err.to_string() }),
        }
    }
    let (idx, score) = best.ok_or_else(|| Error::Selection(format!("state {}: no path entry has positive CV R²", path.state_index)))?;
    let e = &path.entries[idx];
    Ok(SelectionReport {
        state_index: path.state_index,
        method: SelectionMethod::ComplexityScore,
        chosen_index: idx,
        chosen_lambda: e.lambda,
        chosen_term_count: e.term_count,
        cv_r2: e.cv_r2.expect("scored entries have CV R²"),
        score: Some(score),
        peak_found: peak_found(&filled_cv(path)),
        excluded,
    })
}

pub fn select(path: &RegularizationPath, method: SelectionMethod, weights: ScoreWeights) -> Result<SelectionReport> {
    match method {
        SelectionMethod::CvPeak => select_cv_peak(path),
        SelectionMethod::ComplexityScore => select_by_score(path, weights),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    pub(crate) fn path_from(cvs: &[f64], counts: &[usize]) -> RegularizationPath {
        RegularizationPath {
            state_index: 0,
            entries: cvs
                .iter()
                .zip(counts)
                .enumerate()
                .map(|(i, (&cv, &k))| PathEntry {
                    lambda: 1.0 / (i + 1) as f64,
                    coefficients: vec![],
                    train_r2: cv,
                    cv_r2: Some(cv),
                    term_count: k,
                    converged: true,
                })
                .collect(),
        }
    }

    #[test]
    fn r2_cases() {
        let y = array![1.0, 2.0, 3.0, 4.0];
        assert_eq!(r_squared(y.view(), y.view()).unwrap(), 1.0);
        let mean = array![2.5, 2.5, 2.5, 2.5];
        assert_eq!(r_squared(y.view(), mean.view()).unwrap(), 0.0);
        let bad = array![4.0, 3.0, 2.0, 1.0];
        assert!(r_squared(y.view(), bad.view()).unwrap() < 0.0);
        let flat = array![1.0, 1.0, 1.0];
        assert!(matches!(r_squared(flat.view(), flat.view()), Err(Error::UndefinedR2)));
    }

    #[test]
    fn cv_peak_interior() {
        let r = select_cv_peak(&path_from(&[0.2, 0.8, 0.5], &[0, 1, 2])).unwrap();
        assert_eq!(r.chosen_index, 1);
        assert!(r.peak_found);
    }

    #[test]
    fn cv_peak_monotone() {
        let r = select_cv_peak(&path_from(&[0.2, 0.5, 0.8], &[0, 1, 2])).unwrap();
        assert_eq!(r.chosen_index, 2);
        assert!(!r.peak_found);
    }

    #[test]
    fn cv_peak_tie_prefers_larger_lambda() {
        let r = select_cv_peak(&path_from(&[0.2, 0.7, 0.7, 0.1], &[0, 1, 3, 5])).unwrap();
        assert_eq!(r.chosen_index, 1);
        assert!(select_cv_peak(&path_from(&[0.2, 0.7], &[0, 1])).is_err());
    }

    #[test]
    fn score_arithmetic() {
        assert_eq!(complexity_score(0, 1.0, -0.05, -1.0).unwrap(), 0.0);
        let s = complexity_score(10, 0.9, -0.01, -1.0).unwrap();
        assert!((s - (-0.1 + 0.9f64.ln())).abs() < 1e-12, "{s}");
        assert!(complexity_score(3, 0.0, -0.05, -1.0).is_err());
        assert!(complexity_score(3, -0.2, -0.05, -1.0).is_err());
    }

    #[test]
    fn score_selection() {
        let w = ScoreWeights { score_alpha: -0.05, score_beta: -1.0 };
        let r = select_by_score(&path_from(&[0.5, 0.9], &[0, 2]), w).unwrap();
        assert_eq!(r.chosen_index, 1);

        // Equal scores: the larger lambda wins.
        let r = select_by_score(&path_from(&[0.5, 0.5], &[2, 2]), w).unwrap();
        assert_eq!(r.chosen_index, 0);

        let plain = ScoreWeights { score_alpha: 0.0, score_beta: -1.0 };
        let r = select_by_score(&path_from(&[-0.3, 0.4, 0.6, 0.55], &[0, 1, 9, 12]), plain).unwrap();
        assert_eq!(r.chosen_index, 2);
        assert_eq!(r.excluded.len(), 1);

        let r = select_by_score(&path_from(&[0.3], &[4]), w).unwrap();
        assert_eq!(r.chosen_index, 0);
        assert!(select_by_score(&path_from(&[-1.0, 0.0], &[0, 1]), w).is_err());
    }

    #[test]
    fn report_round_trip() {
        let r = select_by_score(&path_from(&[-0.3, 0.4, 0.6], &[0, 1, 9]), ScoreWeights::default()).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        let back: SelectionReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
