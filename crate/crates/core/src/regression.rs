//! Per-state LASSO by cyclic coordinate descent, and warm-started paths.
//!
//! Each state `i` solves
//!
//! ```text
//! min_ξ  (1/2m) ‖ẋᵢ − Θ ξ‖² + λ ‖ξ‖₁
//! ```
//!
//! with no intercept. Columns of `Θ` are rescaled to unit mean square
//! before solving (so `λ` means the same thing for every term) and the
//! coefficients are mapped back afterwards; the penalty therefore applies
//! to the rescaled coefficients.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::r_squared;

/// `sign(z)·max(|z| − t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoSettings {
    /// Convergence threshold on the largest coefficient change in a full sweep.
    pub tol: f64,
    /// Maximum number of full sweeps.
    pub max_iters: usize,
    /// Rescale columns to unit mean square before solving.
    pub standardize: bool,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self { tol: 1e-6, max_iters: 10_000, standardize: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coef: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

impl LassoFit {
    pub fn term_count(&self) -> usize {
        self.coef.iter().filter(|c| **c != 0.0).count()
    }
}

/// Rescaled design and its Gram matrix, shared by every target fit against it.
#[derive(Debug, Clone)]
pub struct LassoDesign {
    m: usize,
    // Columns divided by `scales`.
    scaled: Array2<f64>,
    scales: Vec<f64>,
    // x̃ᵀx̃ / m.
    gram: Array2<f64>,
    settings: LassoSettings,
}

impl LassoDesign {
    pub fn new(theta: ArrayView2<f64>, settings: LassoSettings) -> Result<Self> {
        let (m, k) = theta.dim();
        if m == 0 || k == 0 {
            return Err(Error::Shape("empty design".into()));
        }
        if !(settings.tol > 0.0) || settings.max_iters == 0 {
            return Err(Error::Parameter("lasso tol and max_iters must be positive".into()));
        }
        let mf = m as f64;
        let mut scaled = theta.to_owned();
        let mut scales = Vec::with_capacity(k);
        for mut col in scaled.axis_iter_mut(Axis(1)) {
            let ms = col.iter().map(|v| v * v).sum::<f64>() / mf;
            if ms == 0.0 {
                scales.push(0.0);
                continue;
            }
            let scale = if settings.standardize { ms.sqrt() } else { 1.0 };
            col.mapv_inplace(|v| v / scale);
            scales.push(scale);
        }
        let gram = scaled.t().dot(&scaled) / mf;
        Ok(Self { m, scaled, scales, gram, settings })
    }

    pub fn n_terms(&self) -> usize {
        self.scales.len()
    }

    pub fn n_rows(&self) -> usize {
        self.m
    }
}

/// One target against a [`LassoDesign`], reused along a path.
#[derive(Debug, Clone)]
pub struct LassoProblem<'a> {
    design: std::borrow::Cow<'a, LassoDesign>,
    // x̃ᵀy / m and yᵀy / m.
    xty: Vec<f64>,
    yy: f64,
    y: Vec<f64>,
}

impl LassoProblem<'static> {
    pub fn new(theta: ArrayView2<f64>, y: ArrayView1<f64>, settings: LassoSettings) -> Result<Self> {
        if y.len() != theta.nrows() {
            return Err(Error::Shape(format!("design has {} rows, target has {}", theta.nrows(), y.len())));
        }
        let design = LassoDesign::new(theta, settings)?;
        LassoProblem::build(std::borrow::Cow::Owned(design), y)
    }
}

impl<'a> LassoProblem<'a> {
    pub fn with_design(design: &'a LassoDesign, y: ArrayView1<f64>) -> Result<Self> {
        if y.len() != design.m {
            return Err(Error::Shape(format!("design has {} rows, target has {}", design.m, y.len())));
        }
        LassoProblem::build(std::borrow::Cow::Borrowed(design), y)
    }

    fn build(design: std::borrow::Cow<'a, LassoDesign>, y: ArrayView1<f64>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("target contains non-finite values".into()));
        }
        let mf = design.m as f64;
        let xty = (design.scaled.t().dot(&y) / mf).to_vec();
        let yy = y.dot(&y) / mf;
        Ok(Self { design, xty, yy, y: y.to_vec() })
    }

    pub fn n_terms(&self) -> usize {
        self.design.n_terms()
    }

    /// Smallest `λ` whose solution is identically zero: `max |x̃ⱼᵀy| / m`.
    pub fn lambda_max(&self) -> f64 {
        self.xty.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Coordinate descent from `beta` (rescaled coefficients), updated in place.
    /// Works on the Gram matrix, tracking the correlations `x̃ⱼᵀr/m`.
    pub fn solve_scaled(&self, lambda: f64, beta: &mut [f64]) -> Result<(bool, usize)> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
        }
        let k = self.n_terms();
        let settings = self.design.settings;
        let mut grad = self.xty.clone();
        for j in 0..k {
            if beta[j] != 0.0 {
                for (g, r) in grad.iter_mut().zip(self.design.gram.row(j).iter()) {
                    *g -= beta[j] * r;
                }
            }
        }
        let mut prev_obj = self.objective_from(&grad, beta, lambda);
        let mut active: Vec<usize> = Vec::new();
        let mut sweeps = 0;
        while sweeps < settings.max_iters {
            // Full sweep over every coordinate.
            sweeps += 1;
            let change = self.sweep(0..k, lambda, beta, &mut grad);
            self.check_descent(&grad, beta, lambda, &mut prev_obj);
            if change < settings.tol {
                return Ok((true, sweeps));
            }
            // Then iterate on the active set until it settles.
            active.clear();
            active.extend((0..k).filter(|&j| beta[j] != 0.0));
            while sweeps < settings.max_iters {
                sweeps += 1;
                let change = self.sweep(active.iter().copied(), lambda, beta, &mut grad);
                self.check_descent(&grad, beta, lambda, &mut prev_obj);
                if change < settings.tol {
                    break;
                }
            }
        }
        Ok((false, sweeps))
    }

    fn sweep(&self, coords: impl Iterator<Item = usize>, lambda: f64, beta: &mut [f64], grad: &mut [f64]) -> f64 {
        let gram = &self.design.gram;
        let mut max_change = 0.0f64;
        for j in coords {
            let nj = gram[[j, j]];
            if nj == 0.0 {
                continue;
            }
            let old = beta[j];
            let rho = grad[j] + nj * old;
            let new = soft_threshold(rho, lambda) / nj;
            if new != old {
                // The Gram matrix is symmetric, so row j serves as column j.
                let row = gram.row(j);
                let delta = new - old;
                for (g, r) in grad.iter_mut().zip(row.iter()) {
                    *g -= delta * r;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    #[inline]
    fn check_descent(&self, grad: &[f64], beta: &[f64], lambda: f64, prev: &mut f64) {
        if cfg!(debug_assertions) {
            let obj = self.objective_from(grad, beta, lambda);
            // The quadratic is formed from inner products, so allow rounding
            // on the scale of ‖y‖².
            debug_assert!(obj <= *prev + 1e-10 * self.yy.max(1e-300), "objective increased from {prev} to {obj}");
            *prev = obj;
        }
    }

    // ½‖r‖²/m = ½(yᵀy − x̃ᵀyᵀβ − gradᵀβ)/m with grad = x̃ᵀr/m.
    fn objective_from(&self, grad: &[f64], beta: &[f64], lambda: f64) -> f64 {
        0.5 * (self.yy - dot(&self.xty, beta) - dot(grad, beta)) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Objective value for coefficients in original column units, from the
    /// explicit residual.
    pub fn objective(&self, coef: &[f64], lambda: f64) -> f64 {
        let beta = self.to_scaled(coef);
        let resid = self.residual_scaled(&beta);
        0.5 * dot(&resid, &resid) / self.design.m as f64 + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    fn residual_scaled(&self, beta: &[f64]) -> Vec<f64> {
        let b = ndarray::ArrayView1::from(beta);
        let fit = self.design.scaled.dot(&b);
        self.y.iter().zip(fit.iter()).map(|(y, f)| y - f).collect()
    }

    pub fn to_scaled(&self, coef: &[f64]) -> Vec<f64> {
        coef.iter().zip(&self.design.scales).map(|(c, s)| c * s).collect()
    }

    pub fn from_scaled(&self, beta: &[f64]) -> Vec<f64> {
        beta.iter().zip(&self.design.scales).map(|(b, s)| if *s == 0.0 { 0.0 } else { b / s }).collect()
    }

    /// Largest violation of the optimality conditions in rescaled units:
    /// `|x̃ⱼᵀr/m − λ·sign(βⱼ)|` on the support, `max(|x̃ⱼᵀr/m| − λ, 0)` off it.
    /// Uses the explicit residual.
    pub fn kkt_violation(&self, coef: &[f64], lambda: f64) -> f64 {
        let beta = self.to_scaled(coef);
        let resid = ndarray::Array1::from(self.residual_scaled(&beta));
        let g = self.design.scaled.t().dot(&resid) / self.design.m as f64;
        let mut worst = 0.0f64;
        for j in 0..self.n_terms() {
            if self.design.scales[j] == 0.0 {
                continue;
            }
            let v = if beta[j] != 0.0 { (g[j] - lambda * beta[j].signum()).abs() } else { (g[j].abs() - lambda).max(0.0) };
            worst = worst.max(v);
        }
        worst
    }

    /// Solves from zero and returns coefficients in original column units.
    pub fn solve(&self, lambda: f64) -> Result<LassoFit> {
        let mut beta = vec![0.0; self.n_terms()];
        let (converged, sweeps) = self.solve_scaled(lambda, &mut beta)?;
        Ok(LassoFit { coef: self.from_scaled(&beta), converged, sweeps })
    }
}

/// One-shot LASSO solve.
pub fn lasso_cd(theta: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64, settings: LassoSettings) -> Result<LassoFit> {
    if !(lambda > 0.0) {
        return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    LassoProblem::new(theta, y, settings)?.solve(lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub lambda: f64,
    pub coefficients: Vec<f64>,
    pub train_r2: f64,
    /// Filled in by model selection.
    pub cv_r2: Option<f64>,
    pub term_count: usize,
    pub converged: bool,
}

/// LASSO solutions for one state over strictly decreasing `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizationPath {
    pub state_index: usize,
    pub entries: Vec<PathEntry>,
}

impl RegularizationPath {
    pub fn lambdas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.lambda).collect()
    }

    pub fn position_of(&self, lambda: f64) -> Option<usize> {
        self.entries.iter().position(|e| e.lambda == lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSettings {
    pub n_lambdas: usize,
    /// `λ_min / λ_max`.
    pub lambda_min_ratio: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub standardize: bool,
}

impl PathSettings {
    pub fn lasso(&self) -> LassoSettings {
        LassoSettings { tol: self.tol, max_iters: self.max_iters, standardize: self.standardize }
    }
}

impl Default for PathSettings {
    fn default() -> Self {
        Self { n_lambdas: 60, lambda_min_ratio: 1e-4, tol: 1e-6, max_iters: 10_000, standardize: true }
    }
}

/// `n` values decreasing geometrically from `lambda_max` to `lambda_max·ratio`.
pub fn lambda_grid(lambda_max: f64, ratio: f64, n: usize) -> Vec<f64> {
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..n).map(|i| if i == 0 { lambda_max } else { (hi + (lo - hi) * i as f64 / (n - 1) as f64).exp() }).collect()
}

/// Warm-started path from `λ_max` down to `λ_max · lambda_min_ratio`.
pub fn fit_path(theta: ArrayView2<f64>, y: ArrayView1<f64>, settings: &PathSettings, state_index: usize) -> Result<RegularizationPath> {
    check_path_settings(settings)?;
    let design = LassoDesign::new(theta, settings.lasso())?;
    fit_path_with(&design, theta, y, settings, state_index)
}

fn check_path_settings(settings: &PathSettings) -> Result<()> {
    if settings.n_lambdas < 2 {
        return Err(Error::Parameter("a path needs at least 2 lambdas".into()));
    }
    if !(settings.lambda_min_ratio > 0.0 && settings.lambda_min_ratio < 1.0) {
        return Err(Error::Parameter(format!("lambda_min_ratio must lie in (0, 1), got {}", settings.lambda_min_ratio)));
    }
    Ok(())
}

/// [`fit_path`] against a prepared design built from `theta`.
pub fn fit_path_with(
    design: &LassoDesign,
    theta: ArrayView2<f64>,
    y: ArrayView1<f64>,
    settings: &PathSettings,
    state_index: usize,
) -> Result<RegularizationPath> {
    check_path_settings(settings)?;
    let problem = LassoProblem::with_design(design, y)?;
    let lmax = problem.lambda_max();
    if !(lmax > 0.0) {
        return Err(Error::Parameter(format!("state {state_index}: target is orthogonal to every candidate term")));
    }
    let mut beta = vec![0.0; problem.n_terms()];
    let mut entries = Vec::with_capacity(settings.n_lambdas);
    for lambda in lambda_grid(lmax, settings.lambda_min_ratio, settings.n_lambdas) {
        let (converged, _) = problem.solve_scaled(lambda, &mut beta)?;
        let coefficients = problem.from_scaled(&beta);
        let pred = theta.dot(&ndarray::Array1::from(coefficients.clone()));
        let train_r2 = r_squared(y, pred.view())?;
        entries.push(PathEntry {
            lambda,
            term_count: coefficients.iter().filter(|c| **c != 0.0).count(),
            coefficients,
            train_r2,
            cv_r2: None,
            converged,
        });
    }
    Ok(RegularizationPath { state_index, entries })
}

/// Independent path per derivative column; failures are kept per state.
pub fn fit_all_states(theta: ArrayView2<f64>, ydots: ArrayView2<f64>, settings: &PathSettings) -> Vec<Result<RegularizationPath>> {
    let design = match check_path_settings(settings).and_then(|_| LassoDesign::new(theta, settings.lasso())) {
        Ok(d) => d,
        Err(e) => {
            let msg = e.to_string();
            let mut out: Vec<Result<RegularizationPath>> = vec![Err(e)];
            out.extend((1..ydots.ncols()).map(|_| Err(Error::Parameter(msg.clone()))));
            return out;
        }
    };
    (0..ydots.ncols()).into_par_iter().map(|i| fit_path_with(&design, theta, ydots.column(i), settings, i)).collect()
}

/// Fixed-`λ` solve per derivative column, assembled into `Ξ` (k × n).
pub fn fit_all_states_at(
    theta: ArrayView2<f64>,
    ydots: ArrayView2<f64>,
    lambda: f64,
    settings: LassoSettings,
) -> Result<(Array2<f64>, Vec<bool>)> {
    let fits: Vec<Result<LassoFit>> =
        (0..ydots.ncols()).into_par_iter().map(|i| lasso_cd(theta, ydots.column(i), lambda, settings)).collect();
    let fits = collect_states(fits)?;
    let k = theta.ncols();
    let mut xi = Array2::zeros((k, fits.len()));
    for (i, f) in fits.iter().enumerate() {
        for (j, c) in f.coef.iter().enumerate() {
            xi[[j, i]] = *c;
        }
    }
    Ok((xi, fits.into_iter().map(|f| f.converged).collect()))
}

/// Unwraps per-state results, reporting every failing state at once.
pub fn collect_states<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failures.push((i, e)),
        }
    }
    match failures.len() {
        0 => Ok(ok),
        1 => {
            let (i, e) = failures.pop().unwrap();
            Err(e.context(format!("state {i}")))
        }
        _ => {
            let msg = failures.iter().map(|(i, e)| format!("state {i}: {e}")).collect::<Vec<_>>().join("; ");
            let (_, first) = failures.remove(0);
            Err(first.context(format!("{} states failed ({msg})", failures.len() + 1)))
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
    }

    #[test]
    fn orthonormal_closed_form() {
        // ‖θⱼ‖² = m = 2 and θⱼᵀy/m = [3, 0.5].
        let s = 2f64.sqrt();
        let theta = array![[s, 0.0], [0.0, s]];
        let y = array![3.0 * s, 0.5 * s];
        let fit = lasso_cd(theta.view(), y.view(), 0.6, LassoSettings::default()).unwrap();
        assert!((fit.coef[0] - 2.4).abs() < 1e-12);
        assert_eq!(fit.coef[1], 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn lambda_max_gives_zero() {
        let theta = array![[1.0, 0.2], [0.5, -1.0], [-0.3, 0.7], [2.0, 0.1]];
        let y = array![1.0, -2.0, 0.5, 0.3];
        let p = LassoProblem::new(theta.view(), y.view(), LassoSettings::default()).unwrap();
        let fit = p.solve(p.lambda_max()).unwrap();
        assert!(fit.coef.iter().all(|&c| c == 0.0));
        let fit = p.solve(p.lambda_max() * 0.9).unwrap();
        assert_eq!(fit.term_count(), 1);
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let theta = array![[1.0], [2.0]];
        let y = array![1.0, 2.0];
        for l in [0.0, -1.0] {
            assert!(matches!(lasso_cd(theta.view(), y.view(), l, LassoSettings::default()), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn non_convergence_is_flagged() {
        let theta = array![[1.0, 1.0], [1.0, 1.0001], [1.0, 0.9999]];
        let y = array![1.0, 2.0, 0.0];
        let settings = LassoSettings { max_iters: 1, tol: 1e-14, ..LassoSettings::default() };
        let fit = lasso_cd(theta.view(), y.view(), 1e-6, settings).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn path_grid_and_first_entry() {
        let theta = array![[1.0, 0.2], [0.5, -1.0], [-0.3, 0.7], [2.0, 0.1], [0.0, 1.0]];
        let y = array![1.0, -2.0, 0.5, 0.3, 0.2];
        let settings = PathSettings { n_lambdas: 7, ..PathSettings::default() };
        let path = fit_path(theta.view(), y.view(), &settings, 0).unwrap();
        assert_eq!(path.entries.len(), 7);
        assert_eq!(path.entries[0].term_count, 0);
        assert!(path.entries.windows(2).all(|w| w[1].lambda < w[0].lambda));
        let ratio = path.entries[6].lambda / path.entries[0].lambda;
        assert!((ratio - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn permuting_states_permutes_columns() {
        let theta = array![[1.0, 0.2], [0.5, -1.0], [-0.3, 0.7], [2.0, 0.1], [0.0, 1.0]];
        let ydots = array![[1.0, 0.1], [-2.0, 0.4], [0.5, -0.2], [0.3, 0.0], [0.2, 0.9]];
        let swapped = array![[0.1, 1.0], [0.4, -2.0], [-0.2, 0.5], [0.0, 0.3], [0.9, 0.2]];
        let (a, _) = fit_all_states_at(theta.view(), ydots.view(), 0.01, LassoSettings::default()).unwrap();
        let (b, _) = fit_all_states_at(theta.view(), swapped.view(), 0.01, LassoSettings::default()).unwrap();
        assert_eq!(a.column(0), b.column(1));
        assert_eq!(a.column(1), b.column(0));

        let same = array![[1.0, 1.0], [-2.0, -2.0], [0.5, 0.5], [0.3, 0.3], [0.2, 0.2]];
        let (c, _) = fit_all_states_at(theta.view(), same.view(), 0.01, LassoSettings::default()).unwrap();
        assert_eq!(c.column(0), c.column(1));
        let single = lasso_cd(theta.view(), ydots.column(0), 0.01, LassoSettings::default()).unwrap();
        assert_eq!(a.column(0).to_vec(), single.coef);
    }

    #[test]
    fn per_state_errors_are_collected() {
        let theta = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        // States 0 and 2 are identically zero.
        let ydots = array![[0.0, 1.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.5, 0.0]];
        let results = fit_all_states(theta.view(), ydots.view(), &PathSettings::default());
        assert!(results[0].is_err() && results[1].is_ok() && results[2].is_err());
        let err = collect_states(results).unwrap_err().to_string();
        assert!(err.contains("state 0") && err.contains("state 2"), "{err}");
    }

    #[test]
    fn zero_columns_stay_zero() {
        let theta = array![[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        let y = Array1::from(vec![1.0, 2.0, 3.1]);
        let fit = lasso_cd(theta.view(), y.view(), 1e-3, LassoSettings::default()).unwrap();
        assert_eq!(fit.coef[1], 0.0);
        assert!(fit.coef[0] > 0.9);
    }
}
