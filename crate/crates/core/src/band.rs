//! Banded LU factorization with partial pivoting.

/// Square matrix with `kl` sub- and `ku` super-diagonals, stored column-wise
/// with room for the fill produced by row interchanges.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    // ab[(kl + ku + i - j) + j * ldab] holds A(i, j).
    ab: Vec<f64>,
    ldab: usize,
}

impl BandMatrix {
    pub(crate) fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self { n, kl, ku, ab: vec![0.0; ldab * n], ldab }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.ku + self.kl >= j && i <= j + self.kl);
        (self.kl + self.ku + i - j) + j * self.ldab
    }

    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(i <= j + self.kl && j <= i + self.ku, "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    /// Factors in place and solves `A x = b`. Returns `None` if singular.
    pub(crate) fn solve(self, b: &[f64]) -> Option<Vec<f64>> {
        Some(self.factor()?.solve(b))
    }

    /// LU factorization with partial pivoting. Returns `None` if singular.
    pub(crate) fn factor(mut self) -> Option<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = 0.0f64;
            for t in 0..=km {
                let v = self.ab[self.idx(j + t, j)].abs();
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 {
                return None;
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let (a, b) = (self.idx(j, c), self.idx(j + jp, c));
                    self.ab.swap(a, b);
                }
            }
            if km > 0 {
                let pivot = self.ab[self.idx(j, j)];
                for t in 1..=km {
                    let k = self.idx(j + t, j);
                    self.ab[k] /= pivot;
                }
                for c in j + 1..=ju {
                    let ajc = self.ab[self.idx(j, c)];
                    if ajc == 0.0 {
                        continue;
                    }
                    for t in 1..=km {
                        let l = self.ab[self.idx(j + t, j)];
                        let k = self.idx(j + t, c);
                        self.ab[k] -= l * ajc;
                    }
                }
            }
        }
        Some(BandLu { a: self, ipiv })
    }
}

/// Factors produced by [`BandMatrix::factor`], reusable across right-hand sides.
#[derive(Debug, Clone)]
pub(crate) struct BandLu {
    a: BandMatrix,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let a = &self.a;
        let (n, kl, kv) = (a.n, a.kl, a.kl + a.ku);
        let ipiv = &self.ipiv;
        let mut x = b.to_vec();
        for j in 0..n {
            let p = ipiv[j];
            if p != j {
                x.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let xj = x[j];
            for t in 1..=km {
                x[j + t] -= a.ab[a.idx(j + t, j)] * xj;
            }
        }
        for j in (0..n).rev() {
            x[j] /= a.ab[a.idx(j, j)];
            let xj = x[j];
            for i in j.saturating_sub(kv)..j {
                x[i] -= a.ab[a.idx(i, j)] * xj;
            }
        }
        x
    }
}
