use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use sindyu::compare::{common_excluding, common_terms, repetition_census, TermSupport};
use sindyu::data::{denormalize, normalize, split_311, TimeSeriesDataset};
use sindyu::library::{CandidateLibrary, LibraryConfig, TermKind};
use sindyu::plant::{generate_signal, SegmentKind};
use sindyu::regression::{LassoProblem, LassoSettings, PathEntry, RegularizationPath};
use sindyu::selection::select_cv_peak;

fn dataset(cols: &[Vec<f64>], u: &[f64]) -> TimeSeriesDataset {
    let m = u.len();
    let names: Vec<String> = (0..cols.len()).map(|j| format!("s{j}")).collect();
    let states = Array2::from_shape_fn((m, cols.len()), |(i, j)| cols[j][i]);
    let times = (0..m).map(|i| i as f64 * 0.25).collect();
    TimeSeriesDataset::new(names, "u", times, states, Array1::from(u.to_vec())).unwrap()
}

fn columns(n: usize, m: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1e3..1e3f64, m), n)
}

/// Every exponent vector with entries in `[lo, hi]` and `Σ|aⱼ| ≤ d`, except zero.
fn brute_force_exponents(n: usize, lo: i32, hi: i32, d: u32) -> BTreeSet<Vec<i32>> {
    let width = (hi - lo + 1) as usize;
    let mut out = BTreeSet::new();
    for code in 0..width.pow(n as u32) {
        let mut c = code;
        let e: Vec<i32> = (0..n)
            .map(|_| {
                let v = lo + (c % width) as i32;
                c /= width;
                v
            })
            .collect();
        if e.iter().any(|&v| v != 0) && e.iter().map(|v| v.unsigned_abs()).sum::<u32>() <= d {
            out.insert(e);
        }
    }
    out
}

fn support(id: usize, terms: &BTreeSet<usize>) -> TermSupport {
    TermSupport {
        system_id: format!("sys{id}"),
        state: "x".into(),
        library_id: "lib".into(),
        terms: terms.iter().map(|j| (*j, format!("t{j}"))).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalize_round_trips(cols in columns(3, 12), u in prop::collection::vec(0.0..5.0f64, 12)) {
        prop_assume!(cols.iter().all(|c| c.iter().any(|v| (v - c[0]).abs() > 1e-3)));
        prop_assume!(u.iter().any(|v| (v - u[0]).abs() > 1e-3));
        let ds = dataset(&cols, &u);
        let (z, stats) = normalize(&ds).unwrap();
        for j in 0..3 {
            let col = z.states().column(j);
            let mean = col.mean().unwrap();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }
        let back = denormalize(&z, &stats).unwrap();
        for (a, b) in back.states().iter().zip(ds.states().iter()) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
        for (a, b) in back.input().iter().zip(ds.input().iter()) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn split_is_a_partition(m in 5usize..3000, seed in any::<u64>()) {
        let s = split_311(m, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.cv).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
        let expect_train = (0.6 * m as f64).round() as usize;
        prop_assert_eq!(s.train.len(), expect_train);
        prop_assert!(s.cv.len().abs_diff(s.test.len()) <= 1);
        prop_assert_eq!(&s, &split_311(m, seed).unwrap());
    }

    #[test]
    fn csv_round_trip_is_bit_exact(cols in columns(2, 9), u in prop::collection::vec(-1e6..1e6f64, 9)) {
        let ds = dataset(&cols, &u);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = TimeSeriesDataset::read_csv(buf.as_slice(), "u").unwrap();
        prop_assert_eq!(back.states(), ds.states());
        prop_assert_eq!(back.input(), ds.input());
        prop_assert_eq!(back.times(), ds.times());
        prop_assert_eq!(back.names(), ds.names());
    }

    #[test]
    fn library_matches_brute_force(n in 1usize..5, d in 0u32..4, lo in -2i32..=0, hi in 0i32..=2) {
        let names: Vec<String> = (0..n).map(|j| format!("v{j}")).collect();
        let cfg = LibraryConfig { max_total_degree: d, min_exponent: lo, max_exponent: hi, include_constant: true, unary_fns: vec![] };
        let lib = CandidateLibrary::build(&names, &cfg).unwrap();
        let got: BTreeSet<Vec<i32>> = lib
            .terms
            .iter()
            .filter_map(|t| match &t.kind {
                TermKind::PowerProduct { exponents } => Some(exponents.clone()),
                _ => None,
            })
            .collect();
        let expect = brute_force_exponents(n, lo, hi, d);
        prop_assert_eq!(lib.len(), expect.len() + 1);
        prop_assert_eq!(got, expect);
    }

    #[test]
    fn signal_stays_within_bounds(
        seed in any::<u64>(),
        lo in -100.0..100.0f64,
        width in 0.1..500.0f64,
        kinds in prop::sample::subsequence(SegmentKind::ALL.to_vec(), 1..=3),
        segments in 1usize..12,
    ) {
        let hi = lo + width;
        let sig = generate_signal(segments as f64 * 0.5, 0.5, (lo, hi), &kinds, seed).unwrap();
        prop_assert_eq!(sig.segments.len(), segments);
        prop_assert!(sig.segments.iter().all(|s| kinds.contains(&s.kind)));
        let n = 40 * segments;
        for i in 0..=n {
            let t = sig.span() * i as f64 / n as f64;
            let v = sig.sample(t).unwrap();
            prop_assert!(v.is_finite() && v >= lo && v <= hi, "t={} v={}", t, v);
        }
    }

    #[test]
    fn lasso_satisfies_kkt(
        seed in any::<u64>(),
        m in 10usize..60,
        k in 1usize..12,
        frac in 0.01..0.99f64,
    ) {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = Array2::from_shape_fn((m, k), |_| normal.sample(&mut rng));
        let y = Array1::from_shape_fn(m, |_| normal.sample(&mut rng));
        let settings = LassoSettings::default();
        let p = LassoProblem::new(x.view(), y.view(), settings).unwrap();
        let lambda = frac * p.lambda_max();
        let fit = p.solve(lambda).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(p.kkt_violation(&fit.coef, lambda) < 10.0 * settings.tol);
    }

    #[test]
    fn cv_peak_is_brute_force_argmax(cv in prop::collection::vec(prop::sample::select(vec![0.1, 0.3, 0.5, 0.7, 0.9]), 3..12)) {
        let n = cv.len();
        let path = RegularizationPath {
            state_index: 0,
            entries: cv
                .iter()
                .enumerate()
                .map(|(i, &c)| PathEntry {
                    lambda: 10f64.powi(-(i as i32)),
                    coefficients: vec![],
                    train_r2: c,
                    cv_r2: Some(c),
                    term_count: i,
                    converged: true,
                })
                .collect(),
        };
        let r = select_cv_peak(&path).unwrap();
        let best = cv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = cv.iter().position(|&c| c == best).unwrap();
        prop_assert_eq!(r.chosen_index, first);
        // No peak unless CV declines after the maximum.
        prop_assert_eq!(r.peak_found, cv[n - 1] < best);
    }

    #[test]
    fn comparison_matches_set_arithmetic(sets in prop::collection::vec(prop::collection::btree_set(0usize..15, 0..10), 2..6)) {
        let supports: Vec<TermSupport> = sets.iter().enumerate().map(|(i, s)| support(i, s)).collect();
        for (a, sa) in supports.iter().zip(&sets) {
            for (b, sb) in supports.iter().zip(&sets) {
                prop_assert_eq!(common_terms(a, b).unwrap(), (sa.intersection(sb).count(), sa.len()));
            }
            prop_assert_eq!(common_terms(a, a).unwrap(), (sa.len(), sa.len()));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for s in &sets {
            for j in s {
                *counts.entry(format!("t{j}")).or_default() += 1;
            }
        }
        let census = repetition_census(&supports).unwrap();
        let got: BTreeMap<String, usize> = census.iter().map(|e| (e.term.clone(), e.count)).collect();
        prop_assert_eq!(got, counts);
        prop_assert!(census.windows(2).all(|w| w[0].count >= w[1].count));
        for x in 0..sets.len() {
            let expect: Vec<String> = (0..15)
                .filter(|j| sets.iter().enumerate().filter(|(i, _)| *i != x).all(|(_, s)| s.contains(j)))
                .map(|j| format!("t{j}"))
                .collect();
            prop_assert_eq!(common_excluding(&supports, x).unwrap(), expect);
        }
    }
}
