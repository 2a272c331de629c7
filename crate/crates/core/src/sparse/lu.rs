use super::{Ordering, SparseMat};
use crate::error::{invalid, Error, Result};

const NONE: usize = usize::MAX;

/// Left-looking sparse LU with partial pivoting (Gilbert-Peierls):
/// P A Q = L U with L unit lower triangular.
#[derive(Debug, Clone)]
pub struct LuFactor {
    n: usize,
    pinv: Vec<usize>,
    q: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    up: Vec<usize>,
    ui: Vec<usize>,
    ux: Vec<f64>,
}

impl LuFactor {
    pub fn new(a: &SparseMat, ordering: Ordering) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return invalid("LU needs a square matrix");
        }
        let q = ordering.permutation(&a.pattern());
        // Columns of A are the rows of Aᵀ.
        let at = a.transpose();
        let mut pinv = vec![NONE; n];
        let mut lp = Vec::with_capacity(n + 1);
        let mut up = Vec::with_capacity(n + 1);
        let mut li = Vec::new();
        let mut lx = Vec::new();
        let mut ui = Vec::new();
        let mut ux = Vec::new();
        let mut x = vec![0.0; n];
        let mut xi = vec![0usize; n];
        let mut mark = vec![NONE; n];
        let mut stack = vec![0usize; n];
        let mut pstack = vec![0usize; n];

        for k in 0..n {
            lp.push(li.len());
            up.push(ui.len());
            let col = q[k];
            let (bi, bx) = at.row(col);

            // Reach of the column pattern in the graph of L.
            let mut top = n;
            for &start in bi {
                if mark[start] == k {
                    continue;
                }
                let mut head = 0usize;
                stack[0] = start;
                loop {
                    let j = stack[head];
                    let jnew = pinv[j];
                    if mark[j] != k {
                        mark[j] = k;
                        pstack[head] = if jnew == NONE { 0 } else { lp[jnew] };
                    }
                    let end = if jnew == NONE { 0 } else { lp[jnew + 1] };
                    let mut done = true;
                    let mut p = pstack[head];
                    while p < end {
                        let i = li[p];
                        p += 1;
                        if mark[i] != k {
                            pstack[head] = p;
                            head += 1;
                            stack[head] = i;
                            done = false;
                            break;
                        }
                    }
                    if done {
                        top -= 1;
                        xi[top] = j;
                        if head == 0 {
                            break;
                        }
                        head -= 1;
                    }
                }
            }
            for &i in &xi[top..n] {
                x[i] = 0.0;
            }
            for (&i, &v) in bi.iter().zip(bx) {
                x[i] += v;
            }
            for &j in &xi[top..n] {
                let jn = pinv[j];
                if jn == NONE {
                    continue;
                }
                let xj = x[j];
                for p in lp[jn] + 1..lp[jn + 1] {
                    x[li[p]] -= lx[p] * xj;
                }
            }

            let mut ipiv = NONE;
            let mut best = -1.0;
            for &i in &xi[top..n] {
                if pinv[i] == NONE {
                    let t = x[i].abs();
                    if t > best {
                        best = t;
                        ipiv = i;
                    }
                } else {
                    ui.push(pinv[i]);
                    ux.push(x[i]);
                }
            }
            if ipiv == NONE || !(best > 0.0) || !best.is_finite() {
                return Err(Error::Singular(col));
            }
            if pinv[col] == NONE && x[col].abs() >= best {
                ipiv = col;
            }
            let pivot = x[ipiv];
            ui.push(k);
            ux.push(pivot);
            pinv[ipiv] = k;
            li.push(ipiv);
            lx.push(1.0);
            for &i in &xi[top..n] {
                if pinv[i] == NONE {
                    li.push(i);
                    lx.push(x[i] / pivot);
                }
                x[i] = 0.0;
            }
        }
        lp.push(li.len());
        up.push(ui.len());
        for r in li.iter_mut() {
            *r = pinv[*r];
        }
        Ok(Self { n, pinv, q, lp, li, lx, up, ui, ux })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[self.pinv[i]] = b[i];
        }
        for j in 0..n {
            let yj = y[j];
            for p in self.lp[j] + 1..self.lp[j + 1] {
                y[self.li[p]] -= self.lx[p] * yj;
            }
        }
        for j in (0..n).rev() {
            let d = self.up[j + 1] - 1;
            y[j] /= self.ux[d];
            let yj = y[j];
            for p in self.up[j]..d {
                y[self.ui[p]] -= self.ux[p] * yj;
            }
        }
        let mut x = vec![0.0; n];
        for k in 0..n {
            x[self.q[k]] = y[k];
        }
        x
    }

    /// log |det A|
    pub fn log_abs_det(&self) -> f64 {
        (0..self.n).map(|j| self.ux[self.up[j + 1] - 1].abs().ln()).sum()
    }

    pub fn nnz(&self) -> usize {
        self.lx.len() + self.ux.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn nonsym(n: usize) -> SparseMat {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, if i % 4 == 0 { 0.0 } else { 3.0 }));
            if i + 1 < n {
                t.push((i, i + 1, 2.0 + i as f64 * 0.1));
                t.push((i + 1, i, -1.0));
            }
            if i + 7 < n {
                t.push((i + 7, i, 0.5));
            }
        }
        SparseMat::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn lu_solves_with_zero_diagonal() {
        let a = nonsym(30);
        let f = LuFactor::new(&a, Ordering::Amd).unwrap();
        let b: Vec<f64> = (0..30).map(|i| 1.0 + i as f64).collect();
        let x = f.solve(&b);
        let r = a.matvec(&x);
        for i in 0..30 {
            assert!((r[i] - b[i]).abs() < 1e-10, "residual {}", r[i] - b[i]);
        }
        let d = a.to_dense();
        let det = d.clone().lu().determinant().abs().ln();
        assert!((f.log_abs_det() - det).abs() < 1e-9);
        let xd = d.lu().solve(&DVector::from_vec(b)).unwrap();
        assert!(x.iter().zip(xd.iter()).all(|(p, q)| (p - q).abs() < 1e-10));
    }

    #[test]
    fn singular_is_reported() {
        let a = SparseMat::from_triplets(3, 3, &[(0, 0, 1.0), (1, 0, 1.0), (2, 2, 1.0)]).unwrap();
        assert!(LuFactor::new(&a, Ordering::Natural).is_err());
    }
}
