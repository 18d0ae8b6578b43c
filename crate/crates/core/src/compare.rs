//! Which terms do models fit on different operating conditions share.
//!
//! Only presence matters: a term belongs to a support when its coefficient
//! is exactly non-zero. Supports carry the library's hash so that only
//! models over the same candidate set are compared.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::library::CandidateLibrary;
use crate::model::SparseModel;

/// Hash of the library's ordered term names and variables.
pub fn library_id(lib: &CandidateLibrary) -> String {
    let mut h = Sha256::new();
    for v in &lib.variable_names {
        h.update(v.as_bytes());
        h.update([0u8]);
    }
    h.update([1u8]);
    h.update(lib.manifest_text().as_bytes());
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSupport {
    pub system_id: String,
    pub state: String,
    pub library_id: String,
    /// Library position → display name.
    pub terms: BTreeMap<usize, String>,
}

impl TermSupport {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn names(&self) -> BTreeSet<&str> {
        self.terms.values().map(String::as_str).collect()
    }
}

pub fn support_of(model: &SparseModel, state: usize, system_id: &str) -> TermSupport {
    TermSupport {
        system_id: system_id.to_string(),
        state: model.state_names[state].clone(),
        library_id: library_id(&model.library),
        terms: model.support_indices(state).into_iter().map(|j| (j, model.library.terms[j].display.clone())).collect(),
    }
}

fn comparable(a: &TermSupport, b: &TermSupport) -> Result<()> {
    if a.library_id != b.library_id {
        return Err(Error::Comparability(format!(
            "`{}` and `{}` use different libraries ({} vs {})",
            a.system_id, b.system_id, a.library_id, b.library_id
        )));
    }
    if a.state != b.state {
        return Err(Error::Comparability(format!("states `{}` and `{}` differ", a.state, b.state)));
    }
    Ok(())
}

/// `(|a ∩ b|, |a|)`: shared terms counted against the row system's own total.
pub fn common_terms(a: &TermSupport, b: &TermSupport) -> Result<(usize, usize)> {
    comparable(a, b)?;
    let common = a.terms.keys().filter(|j| b.terms.contains_key(j)).count();
    Ok((common, a.len()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusEntry {
    pub term: String,
    pub count: usize,
}

/// Number of systems retaining each term, most frequent first, ties in
/// library order. Terms seen in a single system are kept; filter with
/// [`at_least`].
pub fn repetition_census(supports: &[TermSupport]) -> Result<Vec<CensusEntry>> {
    if supports.len() < 2 {
        return Err(Error::Parameter("a census needs at least two systems".into()));
    }
    for s in &supports[1..] {
        comparable(&supports[0], s)?;
    }
    let mut counts: BTreeMap<usize, (String, usize)> = BTreeMap::new();
    for s in supports {
        for (j, name) in &s.terms {
            counts.entry(*j).or_insert_with(|| (name.clone(), 0)).1 += 1;
        }
    }
    let mut out: Vec<(usize, CensusEntry)> = counts.into_iter().map(|(j, (term, count))| (j, CensusEntry { term, count })).collect();
    out.sort_by(|a, b| b.1.count.cmp(&a.1.count).then(a.0.cmp(&b.0)));
    Ok(out.into_iter().map(|(_, e)| e).collect())
}

pub fn at_least(census: &[CensusEntry], threshold: usize) -> Vec<&CensusEntry> {
    census.iter().filter(|e| e.count >= threshold).collect()
}

/// Terms present in every system except `excluded`, in library order.
pub fn common_excluding(supports: &[TermSupport], excluded: usize) -> Result<Vec<String>> {
    let rest: Vec<&TermSupport> = supports.iter().enumerate().filter(|(i, _)| *i != excluded).map(|(_, s)| s).collect();
    let Some(first) = rest.first() else {
        return Ok(vec![]);
    };
    for s in &rest[1..] {
        comparable(first, s)?;
    }
    Ok(first.terms.iter().filter(|(j, _)| rest.iter().all(|s| s.terms.contains_key(j))).map(|(_, n)| n.clone()).collect())
}

/// Structured form of one state's comparison across systems.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateComparison {
    pub state: String,
    pub systems: Vec<String>,
    /// `pairwise[r][c] = (|r ∩ c|, |r|)`.
    pub pairwise: Vec<Vec<(usize, usize)>>,
    pub census: Vec<CensusEntry>,
    /// `excluding[s]`: terms common to every system other than `s`.
    pub excluding: Vec<Vec<String>>,
}

/// Full comparison of one state across systems (at least two).
pub fn compare_state(supports: &[TermSupport]) -> Result<StateComparison> {
    let census = repetition_census(supports)?;
    let mut pairwise = Vec::with_capacity(supports.len());
    for a in supports {
        pairwise.push(supports.iter().map(|b| common_terms(a, b)).collect::<Result<Vec<_>>>()?);
    }
    let excluding = (0..supports.len()).map(|s| common_excluding(supports, s)).collect::<Result<Vec<_>>>()?;
    Ok(StateComparison {
        state: supports[0].state.clone(),
        systems: supports.iter().map(|s| s.system_id.clone()).collect(),
        pairwise,
        census,
        excluding,
    })
}

/// Aligned plain-text tables: pairwise `common/total` with row-system
/// totals, then terms retained by two or more and by three or more systems.
pub fn render_comparison(c: &StateComparison) -> String {
    let mut out = format!("State {}\n\nNumber of terms retained across systems (common/total)\n", c.state);
    let w0 = c.systems.iter().map(|s| s.len()).max().unwrap_or(0).max(6);
    let cells: Vec<Vec<String>> = c.pairwise.iter().map(|row| row.iter().map(|(a, b)| format!("{a}/{b}")).collect()).collect();
    let w = c.systems.iter().map(|s| s.len()).chain(cells.iter().flatten().map(|s| s.len())).max().unwrap_or(0);
    out.push_str(&format!("{:<w0$}", ""));
    for s in &c.systems {
        out.push_str(&format!("  {s:>w$}"));
    }
    out.push('\n');
    for (s, row) in c.systems.iter().zip(&cells) {
        out.push_str(&format!("{s:<w0$}"));
        for cell in row {
            out.push_str(&format!("  {cell:>w$}"));
        }
        out.push('\n');
    }

    out.push_str("\nTerms retained across systems\n");
    let two: Vec<&CensusEntry> = at_least(&c.census, 2);
    let three: Vec<&CensusEntry> = at_least(&c.census, 3);
    let lw = two.iter().map(|e| e.term.len() + 4).max().unwrap_or(0).max("2 or more".len());
    out.push_str(&format!("{:<lw$}  {}\n", "2 or more", "3 or more"));
    for r in 0..two.len().max(three.len()) {
        let a = two.get(r).map(|e| format!("{} ({})", e.term, e.count)).unwrap_or_default();
        let b = three.get(r).map(|e| format!("{} ({})", e.term, e.count)).unwrap_or_default();
        out.push_str(format!("{a:<lw$}  {b}").trim_end());
        out.push('\n');
    }

    if c.systems.len() > 2 {
        out.push_str("\nCommon to all systems excluding one\n");
        for (s, terms) in c.systems.iter().zip(&c.excluding) {
            let list = if terms.is_empty() { "-".to_string() } else { terms.join(", ") };
            out.push_str(&format!("excluding {s:<w0$}  {} {list}\n", terms.len()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn support(id: &str, terms: &[(usize, &str)]) -> TermSupport {
        TermSupport {
            system_id: id.into(),
            state: "x".into(),
            library_id: "lib".into(),
            terms: terms.iter().map(|(j, n)| (*j, n.to_string())).collect(),
        }
    }

    #[test]
    fn pairwise_counts() {
        let a = support("a", &[(0, "A"), (1, "B"), (2, "C")]);
        let b = support("b", &[(1, "B"), (2, "C"), (3, "D")]);
        assert_eq!(common_terms(&a, &b).unwrap(), (2, 3));
        assert_eq!(common_terms(&a, &a).unwrap(), (3, 3));
        let mut other = b.clone();
        other.library_id = "else".into();
        assert!(matches!(common_terms(&a, &other), Err(Error::Comparability(_))));
    }

    #[test]
    fn census_order_and_thresholds() {
        let s = vec![
            support("a", &[(0, "A"), (1, "B"), (5, "F")]),
            support("b", &[(1, "B"), (2, "C"), (5, "F")]),
            support("c", &[(1, "B"), (2, "C"), (3, "D")]),
            support("d", &[(1, "B"), (4, "E")]),
        ];
        let c = repetition_census(&s).unwrap();
        let got: Vec<(&str, usize)> = c.iter().map(|e| (e.term.as_str(), e.count)).collect();
        assert_eq!(got, vec![("B", 4), ("C", 2), ("F", 2), ("A", 1), ("D", 1), ("E", 1)]);
        assert_eq!(at_least(&c, 3).len(), 1);
        assert_eq!(at_least(&c, 2).len(), 3);
        assert!(repetition_census(&s[..1]).is_err());
        assert_eq!(common_excluding(&s, 3).unwrap(), vec!["B".to_string()]);
        assert_eq!(common_excluding(&s[..3], 0).unwrap(), vec!["B".to_string(), "C".to_string()]);
    }

    #[test]
    fn golden_table() {
        let s = vec![
            support("basic", &[(0, "A"), (1, "B"), (2, "C")]),
            support("high", &[(1, "B"), (2, "C")]),
            support("low", &[(2, "C"), (4, "E")]),
        ];
        let text = render_comparison(&compare_state(&s).unwrap());
        let expected = "\
State x

Number of terms retained across systems (common/total)
        basic   high    low
basic     3/3    2/3    1/3
high      2/2    2/2    1/2
low       1/2    1/2    2/2

Terms retained across systems
2 or more  3 or more
C (3)      C (3)
B (2)

Common to all systems excluding one
excluding basic   1 C
excluding high    1 C
excluding low     2 B, C
";
        assert_eq!(text, expected);
    }
}
