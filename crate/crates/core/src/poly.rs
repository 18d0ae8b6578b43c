//! Sparse multivariate polynomials with non-negative exponents, used to move
//! power-product models between raw and autoscaled coordinates.

use std::collections::BTreeMap;

/// Exponent vector → coefficient.
pub type Polynomial = BTreeMap<Vec<u32>, f64>;

pub fn constant(n: usize, c: f64) -> Polynomial {
    let mut p = Polynomial::new();
    p.insert(vec![0; n], c);
    p
}

pub fn add_scaled(acc: &mut Polynomial, p: &Polynomial, scale: f64) {
    for (e, c) in p {
        *acc.entry(e.clone()).or_insert(0.0) += scale * c;
    }
}

pub fn mul(a: &Polynomial, b: &Polynomial) -> Polynomial {
    let mut out = Polynomial::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(e).or_insert(0.0) += ca * cb;
        }
    }
    out
}

/// Expands `Π (scaleⱼ·vⱼ + shiftⱼ)^{exponentsⱼ}` as a polynomial in `v`.
pub fn expand_affine_monomial(exponents: &[u32], scale: &[f64], shift: &[f64]) -> Polynomial {
    let n = exponents.len();
    let mut acc = constant(n, 1.0);
    for (j, &a) in exponents.iter().enumerate() {
        if a == 0 {
            continue;
        }
        let mut lin = Polynomial::new();
        lin.insert(vec![0; n], shift[j]);
        let mut e = vec![0; n];
        e[j] = 1;
        lin.insert(e, scale[j]);
        for _ in 0..a {
            acc = mul(&acc, &lin);
        }
    }
    acc
}

/// Drops terms whose magnitude is at most `rel` times the largest one.
pub fn prune(p: &Polynomial, rel: f64) -> Polynomial {
    let max = p.values().fold(0.0f64, |m, c| m.max(c.abs()));
    p.iter().filter(|(_, c)| c.abs() > rel * max).map(|(e, c)| (e.clone(), *c)).collect()
}
