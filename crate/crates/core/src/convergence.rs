//! Strong L2 error of the rational FEM solution of (I - Delta/kappa^2)^beta u = W
//! on the unit square with Neumann conditions, measured against the exact
//! solution expanded in the cosine eigenbasis.

use crate::error::{invalid, Result};
use crate::fem::matern_operators;
use crate::fem::Boundary;
use crate::mesh::{build_rect_mesh, Rect};
use crate::model::SpdeModel;
use crate::quadrature::{integrate, triangle_rule};
use crate::rational::{split_beta, RationalApprox};
use crate::special::ln_gamma;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone, Debug, Serialize)]
pub struct StrongError {
    pub cells: usize,
    pub h: f64,
    pub m: usize,
    pub n_modes: usize,
    pub error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceResult {
    pub beta: f64,
    pub kappa: f64,
    pub rows: Vec<StrongError>,
    pub slope: f64,
}

/// Smallest m whose rational error matches the FEM error on mesh width h:
/// m = ceil((ln h^2 / (-2 pi sqrt|beta_hat|))^2), at least 1.
pub fn degree_for_mesh(beta: f64, h: f64) -> usize {
    let (_, bh) = split_beta(beta);
    if bh == 0.0 {
        return 1;
    }
    let m = ((h * h).ln() / (-2.0 * PI * bh.abs().sqrt())).powi(2).ceil();
    (m as usize).clamp(1, 12)
}

/// sum of (1 + c (a^2 + b^2))^-p over a, b >= 0 with max(a, b) >= n.
pub fn lattice_tail(n: usize, c: f64, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return invalid("lattice sum diverges for exponent <= 1");
    }
    let f = |a: f64, b: f64| (1.0 + c * (a * a + b * b)).powf(-p);
    let big = n + 400;
    let mut direct = 0.0;
    for a in 0..big {
        let start = if a < n { n } else { 0 };
        for b in start..big {
            direct += f(a as f64, b as f64);
        }
    }
    // midpoint-rule remainder over the lattice points outside [0, big)^2
    let edge = big as f64 - 0.5;
    let tol = 1e-13;
    let half_line = |x: f64| -> f64 {
        let q = 1.0 + c * x * x;
        let from_zero = q.powf(0.5 - p) / c.sqrt() * 0.5 * PI.sqrt() * (ln_gamma(p - 0.5) - ln_gamma(p)).exp();
        from_zero + integrate(|y| f(x, y), -0.5, 0.0, tol, 1e-12).0
    };
    let far_line = |x: f64| -> f64 { integrate(|t: f64| f(x, edge / t) * edge / (t * t), 0.0, 1.0, tol, 1e-12).0 };
    let outer = |g: &dyn Fn(f64) -> f64| integrate(|t: f64| g(edge / t) * edge / (t * t), 0.0, 1.0, tol, 1e-11).0;
    let rem = 2.0 * outer(&half_line) - outer(&far_line);
    Ok(direct + rem)
}

/// Strong error sqrt(E ||u - u_h||^2) on a `cells` x `cells` mesh.
/// `m` defaults to `degree_for_mesh`.
pub fn strong_error(cells: usize, beta: f64, kappa: f64, m: Option<usize>) -> Result<StrongError> {
    if cells == 0 {
        return invalid("need at least one cell");
    }
    if !(beta > 0.5) {
        return invalid(format!("the solution has finite variance only for beta > 1/2, got {beta}"));
    }
    let mesh = build_rect_mesh(Rect::unit(), cells, cells, 0.0)?;
    let h = mesh.max_edge();
    let m = m.unwrap_or_else(|| degree_for_mesh(beta, h));
    let ops = Arc::new(matern_operators(&mesh, kappa, Boundary::Neumann)?);
    let model = SpdeModel::new(ops.clone(), RationalApprox::new(beta, m)?, 1.0)?;
    let n = mesh.n_nodes();
    let nm = 32.max(2 * cells);
    let nq = 6.max((1.2 * nm as f64 / cells as f64) as usize + 4);
    let rule = triangle_rule(nq);

    // quadrature points with their three (node, weight * basis) contributions
    let mut px = Vec::new();
    let mut py = Vec::new();
    let mut contrib: Vec<[(usize, f64); 3]> = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.triangle_area(t);
        let [p0, p1, p2] = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
        for &([u, v], w) in &rule {
            px.push(p0[0] + u * (p1[0] - p0[0]) + v * (p2[0] - p0[0]));
            py.push(p0[1] + u * (p1[1] - p0[1]) + v * (p2[1] - p0[1]));
            let s = 2.0 * area * w;
            contrib.push([(tri[0], s * (1.0 - u - v)), (tri[1], s * u), (tri[2], s * v)]);
        }
    }
    let norm = |a: usize| if a == 0 { 1.0 } else { 2f64.sqrt() };
    let cos_y: Vec<Vec<f64>> =
        (0..nm).map(|b| py.iter().map(|y| norm(b) * (PI * b as f64 * y).cos()).collect()).collect();
    let c2 = PI * PI / (kappa * kappa);
    let mut total = 0.0;
    for a in 0..nm {
        let cx: Vec<f64> = px.iter().map(|x| norm(a) * (PI * a as f64 * x).cos()).collect();
        for (b, cy) in cos_y.iter().enumerate() {
            let mut load = vec![0.0; n];
            for (q, parts) in contrib.iter().enumerate() {
                let e = cx[q] * cy[q];
                for &(i, w) in parts {
                    load[i] += w * e;
                }
            }
            let lam = 1.0 + c2 * (a * a + b * b) as f64;
            let t = model.apply_pr(&model.solve_pl(&load));
            let bt: f64 = load.iter().zip(&t).map(|(x, y)| x * y).sum();
            let ct = ops.c.matvec(&t);
            let tct: f64 = t.iter().zip(&ct).map(|(x, y)| x * y).sum();
            total += lam.powf(-2.0 * beta) - 2.0 * lam.powf(-beta) * bt + tct;
        }
    }
    total += lattice_tail(nm, c2, 2.0 * beta)?;
    Ok(StrongError { cells, h, m, n_modes: nm, error: total.max(0.0).sqrt() })
}

/// Least-squares slope of ln(error) against ln(h).
pub fn fitted_slope(rows: &[StrongError]) -> f64 {
    let n = rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|r| r.h.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.error.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Strong errors on meshes with the given cell counts and the fitted rate.
pub fn convergence_study(cells: &[usize], beta: f64, kappa: f64) -> Result<ConvergenceResult> {
    if cells.len() < 2 {
        return invalid("need at least two meshes");
    }
    let rows = cells.iter().map(|&c| strong_error(c, beta, kappa, None)).collect::<Result<Vec<_>>>()?;
    let slope = fitted_slope(&rows);
    Ok(ConvergenceResult { beta, kappa, rows, slope })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_matches_longer_direct_sum() {
        let (c, p) = (PI * PI / 4.0, 1.5);
        let t4 = lattice_tail(4, c, p).unwrap();
        let t8 = lattice_tail(8, c, p).unwrap();
        let mut ring = 0.0;
        for a in 0..8 {
            for b in 0..8 {
                if a >= 4 || b >= 4 {
                    ring += (1.0 + c * (a * a + b * b) as f64).powf(-p);
                }
            }
        }
        assert!((t4 - (t8 + ring)).abs() < 1e-7 * t4, "{t4} vs {}", t8 + ring);
    }

    #[test]
    fn degree_grows_as_mesh_refines() {
        assert_eq!(degree_for_mesh(0.75, 2f64.sqrt() / 2.0), 1);
        assert_eq!(degree_for_mesh(0.75, 2f64.sqrt() / 16.0), 3);
        assert_eq!(degree_for_mesh(2.0, 0.01), 1);
    }
}
