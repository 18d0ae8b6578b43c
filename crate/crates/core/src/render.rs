//! Plain-text output: equations, path tables and evaluation tables.

use std::fmt::Write as _;

use crate::eval::EvaluationReport;
use crate::library::{compare_exponents, TermDescriptor};
use crate::model::SparseModel;
use crate::regression::RegularizationPath;
use crate::selection::SelectionReport;

/// `c` to four significant digits; scientific outside `[1e-3, 1e5)`.
pub fn sig4(c: f64) -> String {
    if c == 0.0 || !c.is_finite() {
        return format!("{c}");
    }
    let a = c.abs();
    let mut e = a.log10().floor() as i32;
    // Rounding may carry into the next decade (9.99996 → 10.00).
    if (a * 10f64.powi(3 - e)).round() >= 1e4 {
        e += 1;
    }
    if !(-3..5).contains(&e) {
        return format!("{c:.3e}");
    }
    let decimals = (3 - e).max(0) as usize;
    format!("{c:.decimals$}")
}

fn equation_line(name: &str, terms: impl Iterator<Item = (f64, String)>) -> String {
    let mut line = format!("d{name}/dt =");
    let mut first = true;
    for (c, display) in terms {
        let mag = sig4(c.abs());
        let body = if display == "1" { mag } else { format!("{mag} {display}") };
        match (first, c < 0.0) {
            (true, false) => write!(line, " {body}"),
            (true, true) => write!(line, " -{body}"),
            (false, false) => write!(line, " + {body}"),
            (false, true) => write!(line, " - {body}"),
        }
        .unwrap();
        first = false;
    }
    if first {
        line.push_str(" 0");
    }
    line
}

/// One line per state in autoscaled coordinates, terms in library order.
pub fn render_equations(model: &SparseModel) -> String {
    let mut out = String::new();
    for i in 0..model.n_states() {
        let terms = model.support_indices(i).into_iter().map(|j| (model.coefficients[i][j], model.library.terms[j].display.clone()));
        out.push_str(&equation_line(&model.state_names[i], terms));
        out.push('\n');
    }
    out
}

/// The same equations rewritten in raw variables where the support allows
/// it. Terms below `1e-9` of the largest coefficient are dropped.
pub fn render_raw_equations(model: &SparseModel) -> String {
    let names = &model.library.variable_names;
    let mut out = String::new();
    for i in 0..model.n_states() {
        match model.raw_polynomial(i) {
            Ok(p) => {
                let p = crate::poly::prune(&p, 1e-9);
                let mut terms: Vec<(Vec<i32>, f64)> = p.into_iter().map(|(e, c)| (e.into_iter().map(|v| v as i32).collect(), c)).collect();
                terms.sort_by(|a, b| compare_exponents(&a.0, &b.0));
                let shown = terms.into_iter().map(|(e, c)| (c, TermDescriptor::power_product(e, names).display));
                out.push_str(&equation_line(&model.state_names[i], shown));
            }
            Err(e) => write!(out, "d{}/dt: {e}", model.state_names[i]).unwrap(),
        }
        out.push('\n');
    }
    out
}

/// One row per λ, with the selected entry flagged.
pub fn path_table_csv(path: &RegularizationPath, selected: Option<usize>) -> String {
    let mut out = String::from("lambda,term_count,train_r2,cv_r2,converged,selected\n");
    for (k, e) in path.entries.iter().enumerate() {
        let cv = e.cv_r2.map(|v| format!("{v:e}")).unwrap_or_default();
        writeln!(out, "{:e},{},{:e},{},{},{}", e.lambda, e.term_count, e.train_r2, cv, e.converged, Some(k) == selected).unwrap();
    }
    out
}

fn r2_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "undefined".into())
}

/// Aligned table with Train, Test and N per state.
pub fn render_report(r: &EvaluationReport) -> String {
    let mut out = format!("{} ({} rows, dataset {})\n", r.protocol, r.rows, r.fingerprint);
    let rows: Vec<[String; 4]> =
        r.per_state.iter().map(|s| [s.name.clone(), r2_cell(s.train_r2), r2_cell(s.test_r2), s.term_count.to_string()]).collect();
    let header = ["State".to_string(), "Train".into(), "Test".into(), "N".into()];
    let mut w = [0usize; 4];
    for row in rows.iter().chain(std::iter::once(&header)) {
        for (k, cell) in row.iter().enumerate() {
            w[k] = w[k].max(cell.len());
        }
    }
    for row in std::iter::once(&header).chain(rows.iter()) {
        writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}", row[0], row[1], row[2], row[3], w0 = w[0], w1 = w[1], w2 = w[2], w3 = w[3])
            .unwrap();
    }
    out
}

pub fn render_selection(names: &[String], reports: &[SelectionReport]) -> String {
    let mut out = String::new();
    for r in reports {
        write!(
            out,
            "{}: {} picked entry {} (lambda {:.4e}, {} terms, cv R2 {:.6})",
            names[r.state_index], r.method, r.chosen_index, r.chosen_lambda, r.chosen_term_count, r.cv_r2
        )
        .unwrap();
        if let Some(s) = r.score {
            write!(out, ", score {s:.6}").unwrap();
        }
        if !r.peak_found {
            out.push_str(", no interior CV peak");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{Protocol, StateScore};
    use crate::library::{CandidateLibrary, LibraryConfig};

    #[test]
    fn four_significant_digits() {
        assert_eq!(sig4(0.40930), "0.4093");
        assert_eq!(sig4(1.0), "1.000");
        assert_eq!(sig4(-12.3456), "-12.35");
        assert_eq!(sig4(9.99996), "10.00");
        assert_eq!(sig4(0.0012345), "0.001234");
        assert_eq!(sig4(99999.0), "1.000e5");
        assert_eq!(sig4(1.2345e-4), "1.234e-4");
        assert_eq!(sig4(0.0), "0");
    }

    fn model() -> SparseModel {
        let cfg = LibraryConfig { unary_fns: vec![], ..LibraryConfig::default() };
        let lib = CandidateLibrary::build(&["Top_F".into(), "V_Reb".into(), "P22".into()], &cfg).unwrap();
        let k = lib.len();
        SparseModel::from_coefficients(lib, 2, vec![vec![0.0; k]; 2]).unwrap()
    }

    #[test]
    fn equations() {
        let mut m = model();
        assert_eq!(render_equations(&m), "dTop_F/dt = 0\ndV_Reb/dt = 0\n");
        let j = m.library.index_of("V_Reb P22^-1").unwrap();
        m.coefficients[0][j] = 0.40930;
        m.coefficients[0][0] = -0.25;
        m.coefficients[1][m.library.index_of("Top_F").unwrap()] = -1.5;
        m.coefficients[1][m.library.index_of("Top_F^2").unwrap()] = 2e-5;
        assert_eq!(render_equations(&m), "dTop_F/dt = -0.2500 + 0.4093 V_Reb P22^-1\ndV_Reb/dt = -1.500 Top_F + 2.000e-5 Top_F^2\n");
    }

    #[test]
    fn raw_equations() {
        let mut m = model();
        m.coefficients[0][m.library.index_of("Top_F").unwrap()] = 2.0;
        m.norm_stats.means[0] = 1.0;
        m.coefficients[1][m.library.index_of("P22^-1").unwrap()] = 1.0;
        let text = render_raw_equations(&m);
        assert_eq!(text.lines().next().unwrap(), "dTop_F/dt = -2.000 + 2.000 Top_F");
        assert!(text.lines().nth(1).unwrap().contains("no polynomial form"));
    }

    #[test]
    fn report_table() {
        let r = EvaluationReport {
            protocol: Protocol::OutsidePerturbation,
            fingerprint: "ab12".into(),
            rows: 10,
            per_state: vec![
                StateScore { name: "Top_F".into(), train_r2: Some(0.99), test_r2: Some(-30.744), term_count: 12 },
                StateScore { name: "x".into(), train_r2: Some(0.5), test_r2: None, term_count: 3 },
            ],
        };
        let expected = "\
outside-perturbation (10 rows, dataset ab12)
State   Train       Test   N
Top_F  0.9900   -30.7440  12
x      0.5000  undefined   3
";
        assert_eq!(render_report(&r), expected);
    }
}
