//! Candidate-function library `Θ(X, u)`.
//!
//! Terms are functions of the (normalized) variables `x₁ … xₙ, u`. Order is
//! fixed: the constant first, then power products graded by total absolute
//! degree, then unary functions grouped by function and variable. Within a
//! degree, exponent vectors compare lexicographically over the variables,
//! with exponents ranked `1, 2, …, −1, −2, …, 0` so that terms led by
//! earlier variables and positive powers come first.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};

/// Magnitudes below this are clamped before negative powers and logarithms.
pub const SINGULARITY_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnaryFn {
    Sin,
    Cos,
    LogAbs,
    Exp,
    SqrtAbs,
}

impl UnaryFn {
    pub const ALL: [UnaryFn; 5] = [UnaryFn::Sin, UnaryFn::Cos, UnaryFn::LogAbs, UnaryFn::Exp, UnaryFn::SqrtAbs];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            UnaryFn::Sin => x.sin(),
            UnaryFn::Cos => x.cos(),
            UnaryFn::LogAbs => clamp_singular(x).abs().ln(),
            UnaryFn::Exp => x.exp(),
            UnaryFn::SqrtAbs => x.abs().sqrt(),
        }
    }

    fn display(self, var: &str) -> String {
        match self {
            UnaryFn::Sin => format!("sin({var})"),
            UnaryFn::Cos => format!("cos({var})"),
            UnaryFn::LogAbs => format!("ln|{var}|"),
            UnaryFn::Exp => format!("exp({var})"),
            UnaryFn::SqrtAbs => format!("sqrt|{var}|"),
        }
    }
}

impl fmt::Display for UnaryFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::LogAbs => "log-abs",
            UnaryFn::Exp => "exp",
            UnaryFn::SqrtAbs => "sqrt-abs",
        };
        f.write_str(s)
    }
}

/// `sign(x)·max(|x|, floor)`, with zero mapped to `+floor`.
pub fn clamp_singular(x: f64) -> f64 {
    if x.abs() >= SINGULARITY_FLOOR {
        x
    } else if x < 0.0 {
        -SINGULARITY_FLOOR
    } else {
        SINGULARITY_FLOOR
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TermKind {
    Constant,
    PowerProduct { exponents: Vec<i32> },
    Unary { func: UnaryFn, var: usize },
}

/// One candidate function `θⱼ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TermDescriptor {
    #[serde(flatten)]
    pub kind: TermKind,
    pub display: String,
}

impl TermDescriptor {
    pub fn constant() -> Self {
        Self { kind: TermKind::Constant, display: "1".into() }
    }

    pub fn power_product(exponents: Vec<i32>, names: &[String]) -> Self {
        let display = power_display(&exponents, names);
        Self { kind: TermKind::PowerProduct { exponents }, display }
    }

    pub fn unary(func: UnaryFn, var: usize, names: &[String]) -> Self {
        Self { kind: TermKind::Unary { func, var }, display: func.display(&names[var]) }
    }

    /// Evaluates the term at one sample of the variables.
    #[inline]
    pub fn eval(&self, vars: &[f64]) -> f64 {
        match &self.kind {
            TermKind::Constant => 1.0,
            TermKind::PowerProduct { exponents } => eval_power(exponents, vars),
            TermKind::Unary { func, var } => func.eval(vars[*var]),
        }
    }

    /// Sum of absolute exponents; 0 for the constant, 1 for unary terms.
    pub fn degree(&self) -> u32 {
        match &self.kind {
            TermKind::Constant => 0,
            TermKind::PowerProduct { exponents } => exponents.iter().map(|e| e.unsigned_abs()).sum(),
            TermKind::Unary { .. } => 1,
        }
    }
}

/// Product `Π vars[j]^e[j]` with negative powers of near-zero values clamped.
pub fn eval_power(exponents: &[i32], vars: &[f64]) -> f64 {
    let mut acc = 1.0;
    for (&e, &x) in exponents.iter().zip(vars) {
        if e > 0 {
            acc *= x.powi(e);
        } else if e < 0 {
            acc *= clamp_singular(x).powi(e);
        }
    }
    acc
}

fn power_display(exponents: &[i32], names: &[String]) -> String {
    let parts: Vec<String> =
        exponents.iter().zip(names).filter(|(e, _)| **e != 0).map(|(e, n)| if *e == 1 { n.clone() } else { format!("{n}^{e}") }).collect();
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join(" ")
    }
}

/// Rank of a single exponent inside the lexicographic comparison.
fn exponent_rank(e: i32) -> (u8, i32) {
    match e.cmp(&0) {
        Ordering::Greater => (0, e),
        Ordering::Less => (1, -e),
        Ordering::Equal => (2, 0),
    }
}

/// Canonical comparison of two exponent vectors of equal length.
pub fn compare_exponents(a: &[i32], b: &[i32]) -> Ordering {
    let da: u32 = a.iter().map(|e| e.unsigned_abs()).sum();
    let db: u32 = b.iter().map(|e| e.unsigned_abs()).sum();
    da.cmp(&db).then_with(|| a.iter().map(|&e| exponent_rank(e)).cmp(b.iter().map(|&e| exponent_rank(e))))
}

/// Which terms to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LibraryConfig {
    /// Upper bound on `Σ|aⱼ|` for power products.
    pub max_total_degree: u32,
    /// Smallest exponent allowed on any single variable.
    pub min_exponent: i32,
    /// Largest exponent allowed on any single variable.
    pub max_exponent: i32,
    pub include_constant: bool,
    pub unary_fns: Vec<UnaryFn>,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self { max_total_degree: 2, min_exponent: -2, max_exponent: 2, include_constant: true, unary_fns: UnaryFn::ALL.to_vec() }
    }
}

/// Ordered list of candidate terms over a fixed set of variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLibrary {
    pub variable_names: Vec<String>,
    pub terms: Vec<TermDescriptor>,
}

impl CandidateLibrary {
    /// Enumerates every power product with exponents in
    /// `[min_exponent, max_exponent]` and `Σ|aⱼ| ≤ max_total_degree`, plus
    /// one term per (unary function, variable) pair.
    pub fn build(variable_names: &[String], config: &LibraryConfig) -> Result<Self> {
        let n = variable_names.len();
        if n == 0 {
            return Err(Error::Parameter("a library needs at least one variable".into()));
        }
        if config.min_exponent > 0 || config.max_exponent < 0 {
            return Err(Error::Parameter(format!("exponent range [{}, {}] must contain 0", config.min_exponent, config.max_exponent)));
        }
        let mut terms = Vec::new();
        if config.include_constant {
            terms.push(TermDescriptor::constant());
        }
        let mut exps = enumerate_exponents(n, config.min_exponent, config.max_exponent, config.max_total_degree);
        exps.sort_by(|a, b| compare_exponents(a, b));
        terms.extend(exps.into_iter().map(|e| TermDescriptor::power_product(e, variable_names)));
        let fns: BTreeSet<UnaryFn> = config.unary_fns.iter().copied().collect();
        for f in fns {
            for var in 0..n {
                terms.push(TermDescriptor::unary(f, var, variable_names));
            }
        }
        let lib = Self { variable_names: variable_names.to_vec(), terms };
        lib.validate()?;
        Ok(lib)
    }

    /// Checks that display names are unique and indices are in range.
    pub fn validate(&self) -> Result<()> {
        let n = self.variable_names.len();
        let mut seen = BTreeSet::new();
        for t in &self.terms {
            match &t.kind {
                TermKind::PowerProduct { exponents } if exponents.len() != n => {
                    return Err(Error::Schema(format!("term `{}` has wrong arity", t.display)))
                }
                TermKind::Unary { var, .. } if *var >= n => {
                    return Err(Error::Schema(format!("term `{}` references variable {var}", t.display)))
                }
                _ => {}
            }
            if !seen.insert(t.display.as_str()) {
                return Err(Error::Schema(format!("duplicate term `{}`", t.display)));
            }
        }
        Ok(())
    }

    /// Number of terms `k`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn displays(&self) -> Vec<&str> {
        self.terms.iter().map(|t| t.display.as_str()).collect()
    }

    pub fn index_of(&self, display: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.display == display)
    }

    /// Index of the power product with these exponents (all-zero means the constant).
    pub fn find_power_product(&self, exponents: &[i32]) -> Option<usize> {
        if exponents.iter().all(|&e| e == 0) {
            return self.terms.iter().position(|t| t.kind == TermKind::Constant);
        }
        self.terms.iter().position(|t| match &t.kind {
            TermKind::PowerProduct { exponents: e } => e == exponents,
            _ => false,
        })
    }

    pub fn unary_count(&self) -> usize {
        self.terms.iter().filter(|t| matches!(t.kind, TermKind::Unary { .. })).count()
    }

    /// Evaluates every term at one sample; `out` has length `k`.
    pub fn eval_point(&self, vars: &[f64], out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(vars);
        }
    }

    /// `Θ` for a variables matrix `m × (n+1)` (states then input).
    pub fn evaluate_matrix(&self, vars: ArrayView2<f64>) -> Result<Array2<f64>> {
        if vars.ncols() != self.variable_names.len() {
            return Err(Error::Shape(format!(
                "{} variable columns for a library over {} variables",
                vars.ncols(),
                self.variable_names.len()
            )));
        }
        let m = vars.nrows();
        let k = self.len();
        let mut theta = Array2::zeros((m, k));
        let mut row = vec![0.0; vars.ncols()];
        for i in 0..m {
            for (r, v) in row.iter_mut().zip(vars.row(i)) {
                *r = *v;
            }
            for (j, t) in self.terms.iter().enumerate() {
                theta[[i, j]] = t.eval(&row);
            }
        }
        for (j, t) in self.terms.iter().enumerate() {
            if theta.column(j).iter().any(|v| !v.is_finite()) {
                return Err(Error::Evaluation(t.display.clone()));
            }
        }
        Ok(theta)
    }

    /// `Θ(X(t), u(t))` for a dataset whose variables match the library.
    pub fn evaluate(&self, ds: &TimeSeriesDataset) -> Result<Array2<f64>> {
        let names = ds.variable_names();
        if names != self.variable_names {
            return Err(Error::Schema(format!("dataset variables {names:?} do not match library variables {:?}", self.variable_names)));
        }
        self.evaluate_matrix(ds.variables().view())
    }

    /// One display name per line.
    pub fn manifest_text(&self) -> String {
        let mut s = String::new();
        for t in &self.terms {
            s.push_str(&t.display);
            s.push('\n');
        }
        s
    }
}

/// Convenience wrapper over [`CandidateLibrary::build`].
pub fn build_library(variable_names: &[String], config: &LibraryConfig) -> Result<CandidateLibrary> {
    CandidateLibrary::build(variable_names, config)
}

/// Convenience wrapper over [`CandidateLibrary::evaluate`].
pub fn evaluate_library(lib: &CandidateLibrary, ds: &TimeSeriesDataset) -> Result<Array2<f64>> {
    lib.evaluate(ds)
}

/// All non-zero exponent vectors within the bounds, by recursive descent.
fn enumerate_exponents(n: usize, lo: i32, hi: i32, max_degree: u32) -> Vec<Vec<i32>> {
    fn rec(j: usize, budget: u32, lo: i32, hi: i32, cur: &mut Vec<i32>, out: &mut Vec<Vec<i32>>) {
        if j == cur.len() {
            if cur.iter().any(|&e| e != 0) {
                out.push(cur.clone());
            }
            return;
        }
        for e in lo..=hi {
            if e.unsigned_abs() <= budget {
                cur[j] = e;
                rec(j + 1, budget - e.unsigned_abs(), lo, hi, cur, out);
            }
        }
        cur[j] = 0;
    }
    let mut out = Vec::new();
    rec(0, max_degree, lo, hi, &mut vec![0; n], &mut out);
    out
}
