//! P1 finite element matrices for kappa^2 - div(H grad).

use crate::error::{invalid, Result};
use crate::mesh::TriMesh;
use crate::sparse::SparseMat;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub type PointFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
pub type TensorFn = Arc<dyn Fn([f64; 2]) -> [[f64; 2]; 2] + Send + Sync>;

#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    Function(PointFn),
}

impl ScalarField {
    fn at(&self, p: [f64; 2]) -> f64 {
        match self {
            ScalarField::Constant(v) => *v,
            ScalarField::Function(f) => f(p),
        }
    }
}

#[derive(Clone)]
pub enum TensorField {
    Identity,
    Constant([[f64; 2]; 2]),
    Function(TensorFn),
}

impl TensorField {
    fn at(&self, p: [f64; 2]) -> [[f64; 2]; 2] {
        match self {
            TensorField::Identity => [[1.0, 0.0], [0.0, 1.0]],
            TensorField::Constant(h) => *h,
            TensorField::Function(f) => f(p),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Boundary {
    #[default]
    Neumann,
    Dirichlet,
}

/// Mass matrix used for the kappa^2 term of L.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ReactionMass {
    Consistent,
    #[default]
    Lumped,
}

/// Assembled operators on the free nodes.
///
/// `l` is the (possibly rescaled) operator matrix; `scale` records the factor
/// the original operator was divided by.
#[derive(Clone, Debug)]
pub struct FemOperators {
    pub c: SparseMat,
    pub c_lumped: Vec<f64>,
    pub g: SparseMat,
    pub l: SparseMat,
    pub reaction: ReactionMass,
    pub boundary: Boundary,
    /// Mesh node index of every free node.
    pub free_nodes: Vec<usize>,
    pub n_mesh_nodes: usize,
    pub scale: f64,
    /// kappa^2 when it is constant, None for a spatial field.
    pub kappa2: Option<f64>,
}

fn symmetric_from_upper(n: usize, upper: &[(usize, usize, f64)]) -> Result<SparseMat> {
    let u = SparseMat::from_triplets(n, n, upper)?;
    let mut full = Vec::with_capacity(2 * u.nnz());
    for i in 0..n {
        let (cols, vals) = u.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            full.push((i, j, v));
            if i != j {
                full.push((j, i, v));
            }
        }
    }
    let mut m = SparseMat::from_triplets(n, n, &full)?;
    m.symmetric = true;
    Ok(m)
}

fn push_upper(trip: &mut Vec<(usize, usize, f64)>, tri: &[usize; 3], k: &[[f64; 3]; 3]) {
    for a in 0..3 {
        for b in a..3 {
            let (i, j) = (tri[a], tri[b]);
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            trip.push((i, j, k[a][b]));
        }
    }
}

/// Assembles C, lumped C, G_H and L = kappa^2-mass + G_H on `mesh`.
pub fn assemble(
    mesh: &TriMesh,
    kappa2: &ScalarField,
    h: &TensorField,
    boundary: Boundary,
    reaction: ReactionMass,
) -> Result<FemOperators> {
    mesh.validate()?;
    let n = mesh.n_nodes();
    if let ScalarField::Constant(k) = kappa2 {
        if !(*k > 0.0) || !k.is_finite() {
            return invalid(format!("kappa^2 must be positive, got {k}"));
        }
    }
    let mut tc = Vec::with_capacity(6 * mesh.n_triangles());
    let mut tg = Vec::with_capacity(6 * mesh.n_triangles());
    let mut tk = Vec::with_capacity(6 * mesh.n_triangles());
    let mut kappa_lumped = vec![0.0; n];
    let const_kappa = matches!(kappa2, ScalarField::Constant(_));

    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|v| mesh.nodes[v]);
        let area = mesh.triangle_area(t);
        let mids = [
            [(p[0][0] + p[1][0]) / 2.0, (p[0][1] + p[1][1]) / 2.0],
            [(p[1][0] + p[2][0]) / 2.0, (p[1][1] + p[2][1]) / 2.0],
            [(p[2][0] + p[0][0]) / 2.0, (p[2][1] + p[0][1]) / 2.0],
        ];
        // gradient of the basis function of vertex a: perpendicular of the opposite edge
        let mut grad = [[0.0; 2]; 3];
        for a in 0..3 {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            grad[a] = [(p[b][1] - p[c][1]) / (2.0 * area), (p[c][0] - p[b][0]) / (2.0 * area)];
        }
        let hm = match h {
            TensorField::Function(_) => {
                let hs = mids.map(|m| h.at(m));
                let mut s = [[0.0; 2]; 2];
                for hq in &hs {
                    for r in 0..2 {
                        for c in 0..2 {
                            s[r][c] += hq[r][c] / 3.0;
                        }
                    }
                }
                s
            }
            _ => h.at(p[0]),
        };
        let mut ke = [[0.0; 3]; 3];
        let mut me = [[0.0; 3]; 3];
        let mut kk = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                let hg = [hm[0][0] * grad[b][0] + hm[0][1] * grad[b][1], hm[1][0] * grad[b][0] + hm[1][1] * grad[b][1]];
                ke[a][b] = area * (grad[a][0] * hg[0] + grad[a][1] * hg[1]);
                me[a][b] = area / 12.0 * if a == b { 2.0 } else { 1.0 };
            }
        }
        if const_kappa {
            let k = kappa2.at(p[0]);
            for a in 0..3 {
                for b in 0..3 {
                    kk[a][b] = k * me[a][b];
                }
            }
        } else {
            // Edge-midpoint rule, exact for quadratics. phi_a is 1/2 on the two
            // midpoints of the edges touching vertex a.
            let kq = mids.map(|m| kappa2.at(m));
            if kq.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return invalid("kappa^2 field must be positive");
            }
            let phi = [[0.5, 0.0, 0.5], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5]];
            for a in 0..3 {
                for b in 0..3 {
                    kk[a][b] = (0..3).map(|q| area / 3.0 * kq[q] * phi[a][q] * phi[b][q]).sum();
                }
            }
        }
        for a in 0..3 {
            kappa_lumped[tri[a]] += kk[a].iter().sum::<f64>();
        }
        push_upper(&mut tc, tri, &me);
        push_upper(&mut tg, tri, &ke);
        push_upper(&mut tk, tri, &kk);
    }

    let c = symmetric_from_upper(n, &tc)?;
    let g = symmetric_from_upper(n, &tg)?;
    let c_lumped: Vec<f64> = (0..n).map(|i| c.row(i).1.iter().sum()).collect();
    let reaction_matrix = match reaction {
        ReactionMass::Consistent => symmetric_from_upper(n, &tk)?,
        ReactionMass::Lumped => SparseMat::diag(&kappa_lumped),
    };
    let mut l = reaction_matrix.add(1.0, &g, 1.0);
    l.symmetric = true;

    let free_nodes: Vec<usize> = match boundary {
        Boundary::Neumann => (0..n).collect(),
        Boundary::Dirichlet => {
            let mut is_b = vec![false; n];
            mesh.boundary_nodes.iter().for_each(|&b| is_b[b] = true);
            (0..n).filter(|&i| !is_b[i]).collect()
        }
    };
    if free_nodes.is_empty() {
        return invalid("no free nodes after applying boundary conditions");
    }
    let (c, g, l, c_lumped) = if boundary == Boundary::Neumann {
        (c, g, l, c_lumped)
    } else {
        (
            c.restrict(&free_nodes, &free_nodes),
            g.restrict(&free_nodes, &free_nodes),
            l.restrict(&free_nodes, &free_nodes),
            free_nodes.iter().map(|&i| c_lumped[i]).collect(),
        )
    };
    let kappa2_const = match kappa2 {
        ScalarField::Constant(k) => Some(*k),
        ScalarField::Function(_) => None,
    };
    Ok(FemOperators {
        c,
        c_lumped,
        g,
        l,
        reaction,
        boundary,
        free_nodes,
        n_mesh_nodes: n,
        scale: 1.0,
        kappa2: kappa2_const,
    })
}

/// Matérn-type operators: constant kappa, isotropic diffusion, lumped
/// reaction term, spectrum normalized by kappa^2 so that L = C~ + G / kappa^2.
pub fn matern_operators(mesh: &TriMesh, kappa: f64, boundary: Boundary) -> Result<FemOperators> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return invalid(format!("kappa must be positive, got {kappa}"));
    }
    let ops =
        assemble(mesh, &ScalarField::Constant(kappa * kappa), &TensorField::Identity, boundary, ReactionMass::Lumped)?;
    normalize_spectrum(&ops, kappa * kappa)
}

/// Divides L by a lower bound of its spectrum, so the normalized operator has
/// eigenvalues in [1, inf).
pub fn normalize_spectrum(ops: &FemOperators, bound: f64) -> Result<FemOperators> {
    if !(bound > 0.0) || !bound.is_finite() {
        return invalid(format!("spectral bound must be positive, got {bound}"));
    }
    let mut out = ops.clone();
    out.l = ops.l.scaled(1.0 / bound);
    out.l.symmetric = true;
    out.scale = ops.scale * bound;
    Ok(out)
}

impl FemOperators {
    pub fn n(&self) -> usize {
        self.free_nodes.len()
    }

    /// Lower bound of the spectrum of the generalized problem L v = lambda C~ v
    /// before normalization: min kappa^2 (Dirichlet conditions only raise it).
    pub fn eigen_lower_bound(&self) -> Option<f64> {
        self.kappa2.map(|k| k / self.scale)
    }

    /// Same mesh and diffusion with another constant kappa^2, normalized by it.
    /// Only valid for constant-coefficient operators with lumped reaction.
    pub fn rescaled_matern(&self, kappa: f64) -> Result<FemOperators> {
        if self.kappa2.is_none() || self.reaction != ReactionMass::Lumped {
            return invalid("rescaling needs constant kappa and lumped reaction");
        }
        if !(kappa > 0.0) || !kappa.is_finite() {
            return invalid(format!("kappa must be positive, got {kappa}"));
        }
        let k2 = kappa * kappa;
        let mut out = self.clone();
        out.l = SparseMat::diag(&self.c_lumped).add(1.0, &self.g, 1.0 / k2);
        out.l.symmetric = true;
        out.scale = k2;
        out.kappa2 = Some(k2);
        Ok(out)
    }

    /// Restricts the columns of a mesh-level matrix (e.g. an observation
    /// matrix) to the free nodes.
    pub fn restrict_columns(&self, a: &SparseMat) -> SparseMat {
        if self.free_nodes.len() == self.n_mesh_nodes {
            return a.clone();
        }
        let rows: Vec<usize> = (0..a.nrows()).collect();
        a.restrict(&rows, &self.free_nodes)
    }

    /// Free-node vector to mesh-node vector (zero on eliminated nodes).
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_mesh_nodes];
        for (k, &i) in self.free_nodes.iter().enumerate() {
            out[i] = x[k];
        }
        out
    }

    /// Position of a mesh node among the free nodes.
    pub fn free_index(&self, node: usize) -> Option<usize> {
        if self.free_nodes.len() == self.n_mesh_nodes {
            return (node < self.n_mesh_nodes).then_some(node);
        }
        self.free_nodes.binary_search(&node).ok()
    }
}
