use super::SparsePattern;
use std::collections::BTreeSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Ordering {
    Natural,
    #[default]
    Amd,
}

impl Ordering {
    /// perm[k] is the original index placed at position k.
    pub fn permutation(self, pattern: &SparsePattern) -> Vec<usize> {
        match self {
            Ordering::Natural => (0..pattern.n).collect(),
            Ordering::Amd => approximate_minimum_degree(pattern),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Var,
    Elem,
    Absorbed,
}

/// Approximate minimum degree ordering on the quotient graph.
///
/// Uses the AMD external degree bound and element absorption (including
/// aggressive absorption), without supervariable detection. The pattern is
/// symmetrized first, the diagonal is ignored.
pub fn approximate_minimum_degree(pattern: &SparsePattern) -> Vec<usize> {
    let n = pattern.n;
    let mut adj_v: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &j in pattern.row(i) {
            if i != j {
                adj_v[i].push(j);
                adj_v[j].push(i);
            }
        }
    }
    for a in adj_v.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let mut adj_e: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut elem_vars: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut status = vec![Status::Var; n];
    let mut deg: Vec<usize> = adj_v.iter().map(|a| a.len()).collect();
    let mut heap: BTreeSet<(usize, usize)> = (0..n).map(|i| (deg[i], i)).collect();

    let mut mark = vec![0usize; n];
    let mut wflag = vec![0usize; n];
    let mut w = vec![0isize; n];
    let mut stamp = 0usize;
    let mut perm = Vec::with_capacity(n);

    while let Some((_, p)) = heap.pop_first() {
        status[p] = Status::Elem;
        perm.push(p);
        stamp += 1;
        mark[p] = stamp;

        let mut lp: Vec<usize> = Vec::new();
        for &v in &adj_v[p] {
            if status[v] == Status::Var && mark[v] != stamp {
                mark[v] = stamp;
                lp.push(v);
            }
        }
        let old_elems = std::mem::take(&mut adj_e[p]);
        for &e in &old_elems {
            if status[e] != Status::Elem {
                continue;
            }
            for &v in &elem_vars[e] {
                if status[v] == Status::Var && mark[v] != stamp {
                    mark[v] = stamp;
                    lp.push(v);
                }
            }
            status[e] = Status::Absorbed;
            elem_vars[e] = Vec::new();
        }
        adj_v[p] = Vec::new();

        // w[e] = |Le \ Lp| for every element touching Lp.
        for &i in &lp {
            for &e in &adj_e[i] {
                if status[e] != Status::Elem {
                    continue;
                }
                if wflag[e] != stamp {
                    wflag[e] = stamp;
                    w[e] = elem_vars[e].len() as isize;
                }
                w[e] -= 1;
            }
        }

        let remaining = n - perm.len();
        let lp_len = lp.len();
        for &i in &lp {
            let elems = &mut adj_e[i];
            elems.retain(|&e| {
                if status[e] != Status::Elem {
                    return false;
                }
                if wflag[e] == stamp && w[e] <= 0 {
                    status[e] = Status::Absorbed;
                    return false;
                }
                true
            });
            let mut d = 0usize;
            for &e in elems.iter() {
                d += w[e].max(0) as usize;
            }
            elems.push(p);
            adj_v[i].retain(|&v| status[v] == Status::Var && mark[v] != stamp);
            d += adj_v[i].len() + lp_len - 1;
            let d = d.min(deg[i] + lp_len - 1).min(remaining.saturating_sub(1));
            heap.remove(&(deg[i], i));
            deg[i] = d;
            heap.insert((d, i));
        }
        elem_vars[p] = lp;
    }
    perm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseMat;

    fn grid_laplacian(k: usize) -> SparseMat {
        let n = k * k;
        let mut t = Vec::new();
        for i in 0..k {
            for j in 0..k {
                let a = i * k + j;
                t.push((a, a, 4.0));
                if i + 1 < k {
                    t.push((a, a + k, -1.0));
                    t.push((a + k, a, -1.0));
                }
                if j + 1 < k {
                    t.push((a, a + 1, -1.0));
                    t.push((a + 1, a, -1.0));
                }
            }
        }
        SparseMat::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn amd_is_a_permutation() {
        let a = grid_laplacian(12);
        let p = approximate_minimum_degree(&a.pattern());
        let mut s = p.clone();
        s.sort_unstable();
        assert_eq!(s, (0..144).collect::<Vec<_>>());
    }
}
