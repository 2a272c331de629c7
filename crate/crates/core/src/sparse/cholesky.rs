use super::{Ordering, SparseMat};
use crate::error::{invalid, Error, Result};
use std::sync::Arc;

const NONE: usize = usize::MAX;

/// Ordering, elimination tree and column layout of L for one sparsity pattern.
///
/// Reusable across numeric factorizations of matrices with the same pattern.
#[derive(Debug)]
pub struct CholSymbolic {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    parent: Vec<usize>,
    colptr: Vec<usize>,
    a_indptr: Vec<usize>,
    a_indices: Vec<usize>,
}

impl CholSymbolic {
    pub fn analyze(a: &SparseMat, ordering: Ordering) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return invalid("Cholesky needs a square matrix");
        }
        let perm = ordering.permutation(&a.pattern());
        Self::with_permutation(a, perm)
    }

    pub fn with_permutation(a: &SparseMat, perm: Vec<usize>) -> Result<Self> {
        let n = a.nrows();
        if perm.len() != n {
            return invalid("permutation length does not match matrix");
        }
        let mut iperm = vec![NONE; n];
        for (k, &p) in perm.iter().enumerate() {
            if p >= n || iperm[p] != NONE {
                return invalid("not a permutation");
            }
            iperm[p] = k;
        }

        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            let (cols, _) = a.row(perm[k]);
            for &jo in cols {
                let mut i = iperm[jo];
                while i != NONE && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == NONE {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }

        let mut counts = vec![1usize; n];
        let mut flag = vec![NONE; n];
        for k in 0..n {
            flag[k] = k;
            let (cols, _) = a.row(perm[k]);
            for &jo in cols {
                let mut i = iperm[jo];
                if i >= k {
                    continue;
                }
                while i != NONE && flag[i] != k {
                    counts[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut colptr = vec![0usize; n + 1];
        for i in 0..n {
            colptr[i + 1] = colptr[i] + counts[i];
        }
        Ok(Self { n, perm, iperm, parent, colptr, a_indptr: a.indptr().to_vec(), a_indices: a.indices().to_vec() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.colptr[self.n]
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn matches(&self, a: &SparseMat) -> bool {
        a.nrows() == self.n && a.indptr() == self.a_indptr.as_slice() && a.indices() == self.a_indices.as_slice()
    }
}

/// Sparse Cholesky factor P A Pᵀ = L Lᵀ, L stored by columns.
#[derive(Debug, Clone)]
pub struct CholFactor {
    sym: Arc<CholSymbolic>,
    rowind: Vec<usize>,
    values: Vec<f64>,
}

impl CholFactor {
    pub fn new(a: &SparseMat, ordering: Ordering) -> Result<Self> {
        let sym = Arc::new(CholSymbolic::analyze(a, ordering)?);
        Self::with_symbolic(sym, a)
    }

    /// Numeric factorization with a precomputed symbolic analysis.
    pub fn with_symbolic(sym: Arc<CholSymbolic>, a: &SparseMat) -> Result<Self> {
        if !sym.matches(a) {
            return invalid("matrix pattern differs from the analyzed pattern");
        }
        let n = sym.n;
        let nnz = sym.nnz_l();
        let mut rowind = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        let mut next: Vec<usize> = sym.colptr[..n].to_vec();
        let mut x = vec![0.0; n];
        let mut flag = vec![NONE; n];
        let mut stack = vec![0usize; n];
        let mut path = Vec::with_capacity(n);

        for k in 0..n {
            // Row pattern of L(k, :) via the elimination tree, in topological order.
            let mut top = n;
            flag[k] = k;
            let (cols, vals) = a.row(sym.perm[k]);
            for (&jo, &v) in cols.iter().zip(vals) {
                let j = sym.iperm[jo];
                if j > k {
                    continue;
                }
                x[j] += v;
                let mut i = j;
                path.clear();
                while i != NONE && flag[i] != k {
                    path.push(i);
                    flag[i] = k;
                    i = sym.parent[i];
                }
                while let Some(i) = path.pop() {
                    top -= 1;
                    stack[top] = i;
                }
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..n] {
                let lki = x[i] / values[sym.colptr[i]];
                x[i] = 0.0;
                for p in sym.colptr[i] + 1..next[i] {
                    x[rowind[p]] -= values[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                rowind[p] = k;
                values[p] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: sym.perm[k] });
            }
            let p = next[k];
            next[k] += 1;
            rowind[p] = k;
            values[p] = d.sqrt();
        }
        Ok(Self { sym, rowind, values })
    }

    pub fn symbolic(&self) -> &Arc<CholSymbolic> {
        &self.sym
    }

    pub fn n(&self) -> usize {
        self.sym.n
    }

    pub fn nnz_l(&self) -> usize {
        self.values.len()
    }

    /// log det A
    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.sym.n).map(|j| self.values[self.sym.colptr[j]].ln()).sum::<f64>()
    }

    fn lsolve(&self, z: &mut [f64]) {
        let cp = &self.sym.colptr;
        for j in 0..self.sym.n {
            let zj = z[j] / self.values[cp[j]];
            z[j] = zj;
            for p in cp[j] + 1..cp[j + 1] {
                z[self.rowind[p]] -= self.values[p] * zj;
            }
        }
    }

    fn ltsolve(&self, z: &mut [f64]) {
        let cp = &self.sym.colptr;
        for j in (0..self.sym.n).rev() {
            let mut s = z[j];
            for p in cp[j] + 1..cp[j + 1] {
                s -= self.values[p] * z[self.rowind[p]];
            }
            z[j] = s / self.values[cp[j]];
        }
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.sym.n;
        assert_eq!(b.len(), n);
        let mut z: Vec<f64> = self.sym.perm.iter().map(|&p| b[p]).collect();
        self.lsolve(&mut z);
        self.ltsolve(&mut z);
        let mut x = vec![0.0; n];
        for (k, &p) in self.sym.perm.iter().enumerate() {
            x[p] = z[k];
        }
        x
    }

    /// x = Pᵀ L⁻ᵀ z, so that x ~ N(0, A⁻¹) when z ~ N(0, I).
    pub fn solve_lt(&self, z: &[f64]) -> Vec<f64> {
        let n = self.sym.n;
        let mut w = z.to_vec();
        self.ltsolve(&mut w);
        let mut x = vec![0.0; n];
        for (k, &p) in self.sym.perm.iter().enumerate() {
            x[p] = w[k];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn spd(n: usize) -> SparseMat {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + (i % 3) as f64));
            for &j in &[i + 1, i + 5] {
                if j < n {
                    let v = -1.0 / (1.0 + (i + j) as f64 % 4.0);
                    t.push((i, j, v));
                    t.push((j, i, v));
                }
            }
        }
        SparseMat::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn solve_and_logdet_match_dense() {
        let a = spd(40);
        for ord in [Ordering::Natural, Ordering::Amd] {
            let f = CholFactor::new(&a, ord).unwrap();
            let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
            let x = f.solve(&b);
            let d = a.to_dense();
            let ch = d.clone().cholesky().unwrap();
            let xd = ch.solve(&DVector::from_vec(b.clone()));
            for i in 0..40 {
                assert!((x[i] - xd[i]).abs() < 1e-12);
            }
            let ld: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            assert!((f.logdet() - ld).abs() < 1e-10);
        }
    }

    #[test]
    fn indefinite_is_reported() {
        let a = spd(10).add(1.0, &SparseMat::identity(10), -10.0);
        assert!(matches!(CholFactor::new(&a, Ordering::Amd), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn symbolic_reuse_rejects_other_pattern() {
        let a = spd(12);
        let sym = Arc::new(CholSymbolic::analyze(&a, Ordering::Amd).unwrap());
        assert!(CholFactor::with_symbolic(sym.clone(), &a.scaled(2.0)).is_ok());
        assert!(CholFactor::with_symbolic(sym, &SparseMat::identity(12)).is_err());
    }
}
