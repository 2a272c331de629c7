//! Compressed sparse row matrices and the factorizations built on them.

mod cholesky;
mod lu;
mod mtx;
mod ordering;

pub use cholesky::{CholFactor, CholSymbolic};
pub use lu::LuFactor;
pub use mtx::{read_matrix_market, write_matrix_market};
pub use ordering::{approximate_minimum_degree, Ordering};

use crate::error::{invalid, Result};
use nalgebra::DMatrix;

/// CSR matrix with sorted, duplicate-free column indices in every row.
///
/// Entries are structural: values that happen to be zero are kept, so the
/// pattern of a product is the boolean product of the patterns.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMat {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
    /// Set by constructors that produce symmetric matrices by construction.
    pub symmetric: bool,
}

/// Sparsity pattern only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsePattern {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
}

impl SparsePattern {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }
}

impl SparseMat {
    pub fn new(nrows: usize, ncols: usize, indptr: Vec<usize>, indices: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if indptr.len() != nrows + 1 || indices.len() != data.len() || indptr[nrows] != indices.len() {
            return invalid("inconsistent CSR arrays");
        }
        for i in 0..nrows {
            if indptr[i] > indptr[i + 1] {
                return invalid("row pointers must be non-decreasing");
            }
            let row = &indices[indptr[i]..indptr[i + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&j| j >= ncols) {
                return invalid(format!("row {i} has unsorted, duplicate or out-of-range columns"));
            }
        }
        Ok(Self { nrows, ncols, indptr, indices, data, symmetric: false })
    }

    fn from_parts_unchecked(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        data: Vec<f64>,
    ) -> Self {
        Self { nrows, ncols, indptr, indices, data, symmetric: false }
    }

    /// Builds a matrix from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return invalid(format!("triplet ({i}, {j}) outside {nrows}x{ncols}"));
            }
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            let p = next[i];
            cols[p] = j;
            vals[p] = v;
            next[i] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for i in 0..nrows {
            order.clear();
            order.extend(counts[i]..counts[i + 1]);
            order.sort_by_key(|&p| cols[p]);
            for &p in &order {
                if indices.len() > indptr[i] && *indices.last().unwrap() == cols[p] {
                    *data.last_mut().unwrap() += vals[p];
                } else {
                    indices.push(cols[p]);
                    data.push(vals[p]);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self::from_parts_unchecked(nrows, ncols, indptr, indices, data))
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::from_parts_unchecked(n, n, (0..=n).collect(), (0..n).collect(), d.to_vec());
        m.symmetric = true;
        m
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_parts_unchecked(nrows, ncols, vec![0; nrows + 1], Vec::new(), Vec::new())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.data[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn pattern(&self) -> SparsePattern {
        assert_eq!(self.nrows, self.ncols, "pattern() expects a square matrix");
        SparsePattern { n: self.nrows, indptr: self.indptr.clone(), indices: self.indices.clone() }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut indices = vec![0usize; self.nnz()];
        let mut data = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[p];
                let q = next[j];
                indices[q] = i;
                data[q] = self.data[p];
                next[j] += 1;
            }
        }
        let mut t = Self::from_parts_unchecked(self.ncols, self.nrows, counts, indices, data);
        t.symmetric = self.symmetric;
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[p] * x[self.indices[p]];
            }
            *yi = s;
        }
    }

    /// y = Aᵀ x
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            let xi = x[i];
            for p in self.indptr[i]..self.indptr[i + 1] {
                y[self.indices[p]] += self.data[p] * xi;
            }
        }
        y
    }

    /// Sparse product `self * other` (Gustavson).
    pub fn mul(&self, other: &SparseMat) -> SparseMat {
        assert_eq!(self.ncols, other.nrows, "dimension mismatch in sparse product");
        let n = other.ncols;
        let mut acc = vec![0.0; n];
        let mut mark = vec![usize::MAX; n];
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        let mut row_cols: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            row_cols.clear();
            for p in self.indptr[i]..self.indptr[i + 1] {
                let k = self.indices[p];
                let a = self.data[p];
                for q in other.indptr[k]..other.indptr[k + 1] {
                    let j = other.indices[q];
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        row_cols.push(j);
                    }
                    acc[j] += a * other.data[q];
                }
            }
            row_cols.sort_unstable();
            for &j in &row_cols {
                indices.push(j);
                data.push(acc[j]);
            }
            indptr.push(indices.len());
        }
        Self::from_parts_unchecked(self.nrows, n, indptr, indices, data)
    }

    /// alpha * self + beta * other, over the union of the patterns.
    pub fn add(&self, alpha: f64, other: &SparseMat, beta: f64) -> SparseMat {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "dimension mismatch in sparse sum");
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut data = Vec::with_capacity(self.nnz().max(other.nnz()));
        indptr.push(0);
        for i in 0..self.nrows {
            let (ac, av) = self.row(i);
            let (bc, bv) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ac.len() || q < bc.len() {
                if q == bc.len() || (p < ac.len() && ac[p] < bc[q]) {
                    indices.push(ac[p]);
                    data.push(alpha * av[p]);
                    p += 1;
                } else if p == ac.len() || bc[q] < ac[p] {
                    indices.push(bc[q]);
                    data.push(beta * bv[q]);
                    q += 1;
                } else {
                    indices.push(ac[p]);
                    data.push(alpha * av[p] + beta * bv[q]);
                    p += 1;
                    q += 1;
                }
            }
            indptr.push(indices.len());
        }
        let mut m = Self::from_parts_unchecked(self.nrows, self.ncols, indptr, indices, data);
        m.symmetric = self.symmetric && other.symmetric;
        m
    }

    pub fn scaled(&self, s: f64) -> SparseMat {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// diag(d) * self
    pub fn scale_rows(&self, d: &[f64]) -> SparseMat {
        assert_eq!(d.len(), self.nrows);
        let mut m = self.clone();
        for i in 0..m.nrows {
            for p in m.indptr[i]..m.indptr[i + 1] {
                m.data[p] *= d[i];
            }
        }
        m.symmetric = false;
        m
    }

    /// self * diag(d)
    pub fn scale_cols(&self, d: &[f64]) -> SparseMat {
        assert_eq!(d.len(), self.ncols);
        let mut m = self.clone();
        for p in 0..m.indices.len() {
            m.data[p] *= d[m.indices[p]];
        }
        m.symmetric = false;
        m
    }

    /// (A + Aᵀ) / 2, exactly symmetric.
    pub fn symmetrized(&self) -> SparseMat {
        let mut m = self.add(0.5, &self.transpose(), 0.5);
        // Force bitwise symmetry: entries (i,j) and (j,i) are computed in different orders.
        for i in 0..m.nrows {
            for p in m.indptr[i]..m.indptr[i + 1] {
                let j = m.indices[p];
                if j < i {
                    let v = m.get(j, i);
                    m.data[p] = v;
                }
            }
        }
        m.symmetric = true;
        m
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.data.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let t = self.transpose();
        if t.indptr != self.indptr || t.indices != self.indices {
            return false;
        }
        self.data.iter().zip(&t.data).all(|(a, b)| (a - b).abs() <= tol * scale)
    }

    /// Submatrix on the given row and column index lists (in the given order).
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> SparseMat {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &j) in cols.iter().enumerate() {
            col_map[j] = k;
        }
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for &i in rows {
            let start = indices.len();
            for p in self.indptr[i]..self.indptr[i + 1] {
                let k = col_map[self.indices[p]];
                if k != usize::MAX {
                    indices.push(k);
                    data.push(self.data[p]);
                }
            }
            if !cols.windows(2).all(|w| w[0] < w[1]) {
                let mut pairs: Vec<(usize, f64)> =
                    indices[start..].iter().copied().zip(data[start..].iter().copied()).collect();
                pairs.sort_by_key(|x| x.0);
                for (q, (j, v)) in pairs.into_iter().enumerate() {
                    indices[start + q] = j;
                    data[start + q] = v;
                }
            }
            indptr.push(indices.len());
        }
        let mut m = Self::from_parts_unchecked(rows.len(), cols.len(), indptr, indices, data);
        m.symmetric = self.symmetric && rows == cols;
        m
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                d[(i, self.indices[p])] += self.data[p];
            }
        }
        d
    }

    /// Dense to sparse, keeping entries with |a| > drop_tol.
    pub fn from_dense(d: &DMatrix<f64>, drop_tol: f64) -> SparseMat {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                let v = d[(i, j)];
                if v.abs() > drop_tol {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self::from_parts_unchecked(d.nrows(), d.ncols(), indptr, indices, data)
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Pattern of Aᵏ (boolean product); k = 0 gives the identity pattern.
    pub fn pattern_power(&self, k: usize) -> SparsePattern {
        assert_eq!(self.nrows, self.ncols, "pattern_power expects a square matrix");
        let base = self.pattern();
        let mut cur =
            SparsePattern { n: self.nrows, indptr: (0..=self.nrows).collect(), indices: (0..self.nrows).collect() };
        for _ in 0..k {
            cur = pattern_mul(&cur, &base);
        }
        cur
    }
}

pub fn pattern_mul(a: &SparsePattern, b: &SparsePattern) -> SparsePattern {
    let n = a.n;
    let mut mark = vec![usize::MAX; n];
    let mut indptr = vec![0];
    let mut indices = Vec::new();
    let mut row: Vec<usize> = Vec::new();
    for i in 0..n {
        row.clear();
        for &k in a.row(i) {
            for &j in b.row(k) {
                if mark[j] != i {
                    mark[j] = i;
                    row.push(j);
                }
            }
        }
        row.sort_unstable();
        indices.extend_from_slice(&row);
        indptr.push(indices.len());
    }
    SparsePattern { n, indptr, indices }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SparseMat {
        SparseMat::from_triplets(
            3,
            3,
            &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, 2.0), (1, 2, -1.0), (2, 1, -1.0), (0, 0, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = small();
        assert_eq!(a.get(0, 0), 5.0);
        assert_eq!(a.nnz(), 7);
        assert!(a.is_symmetric(0.0));
    }

    #[test]
    fn product_matches_dense() {
        let a = small();
        let b = a.add(1.0, &SparseMat::identity(3), 2.0);
        let p = a.mul(&b).to_dense();
        let q = a.to_dense() * b.to_dense();
        assert!((p - q).norm() < 1e-14);
    }

    #[test]
    fn transpose_and_matvec_t_agree() {
        let a = SparseMat::from_triplets(2, 3, &[(0, 2, 1.5), (1, 0, -2.0), (1, 1, 0.5)]).unwrap();
        let x = [1.0, 2.0];
        assert_eq!(a.matvec_t(&x), a.transpose().matvec(&x));
    }

    #[test]
    fn pattern_power_of_path_graph() {
        let n = 6;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = SparseMat::from_triplets(n, n, &t).unwrap();
        assert_eq!(a.pattern_power(0).nnz(), n);
        assert_eq!(a.pattern_power(1).nnz(), 3 * n - 2);
        assert_eq!(a.pattern_power(2).nnz(), 5 * n - 6);
    }

    #[test]
    fn restrict_keeps_order() {
        let a = small();
        let r = a.restrict(&[2, 0], &[2, 0]);
        assert_eq!(r.get(0, 0), 2.0);
        assert_eq!(r.get(1, 1), 5.0);
    }
}
