//! Rational SPDE model: operators P_l, P_r, precision Q and the actions
//! needed for sampling and covariances.

use crate::error::{invalid, Error, Result};
use crate::fem::FemOperators;
use crate::rational::RationalApprox;
use crate::sparse::{write_matrix_market, CholFactor, LuFactor, Ordering, SparseMat};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::path::Path;
use std::sync::Arc;

/// Factor of C~ - r L. Definite for r <= 0 or r >= 1 (normalized spectrum),
/// LU otherwise.
#[derive(Debug, Clone)]
pub enum ShiftFactor {
    Chol { f: CholFactor, sign: f64 },
    Lu(LuFactor),
}

impl ShiftFactor {
    pub fn new(ops: &FemOperators, r: f64) -> Result<Self> {
        let a = SparseMat::diag(&ops.c_lumped).add(1.0, &ops.l, -r);
        if r <= 0.0 {
            Ok(ShiftFactor::Chol { f: CholFactor::new(&a, Ordering::Amd)?, sign: 1.0 })
        } else if r >= 1.0 {
            Ok(ShiftFactor::Chol { f: CholFactor::new(&a.scaled(-1.0), Ordering::Amd)?, sign: -1.0 })
        } else {
            log::warn!("root {r} lies in (0, 1); C~ - rL may be indefinite, using LU");
            Ok(ShiftFactor::Lu(LuFactor::new(&a, Ordering::Amd)?))
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            ShiftFactor::Chol { f, sign } => {
                let mut x = f.solve(b);
                if *sign < 0.0 {
                    x.iter_mut().for_each(|v| *v = -*v);
                }
                x
            }
            ShiftFactor::Lu(f) => f.solve(b),
        }
    }

    pub fn log_abs_det(&self) -> f64 {
        match self {
            ShiftFactor::Chol { f, .. } => f.logdet(),
            ShiftFactor::Lu(f) => f.log_abs_det(),
        }
    }
}

pub struct SpdeModel {
    pub ops: Arc<FemOperators>,
    pub approx: RationalApprox,
    pub tau: f64,
    /// tau * scale^beta, the amplitude for the normalized operator.
    pub tau_tilde: f64,
    pub p_l: SparseMat,
    pub p_r: SparseMat,
    /// Precision of the latent x, including tau_tilde^2.
    pub q: SparseMat,
    roots: Vec<ShiftFactor>,
    l_factor: Option<CholFactor>,
    logdet_c: f64,
    logdet_pl: f64,
}

fn mul_cinv(a: &SparseMat, c: &[f64]) -> SparseMat {
    let inv: Vec<f64> = c.iter().map(|v| 1.0 / v).collect();
    a.scale_cols(&inv)
}

impl SpdeModel {
    /// Builds the model for (tau_tilde^-1 L)^beta-type operators, where `ops`
    /// are normalized so the spectrum of C~^-1 L is bounded below by 1.
    pub fn new(ops: Arc<FemOperators>, approx: RationalApprox, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return invalid(format!("tau must be positive, got {tau}"));
        }
        if ops.c_lumped.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Numerical("lumped mass has a non-positive entry".into()));
        }
        let n = ops.n();
        let cl = &ops.c_lumped;
        let ctilde = SparseMat::diag(cl);
        let tau_tilde = tau * ops.scale.powf(approx.beta);

        let mut roots = Vec::with_capacity(approx.r2.len());
        for &r in &approx.r2 {
            roots.push(ShiftFactor::new(&ops, r)?);
        }
        let k = approx.l_power();
        let l_factor = if k > 0 { Some(CholFactor::new(&ops.l, Ordering::Amd)?) } else { None };

        // P_l = b (C~ - r_1 L) C~^-1 (C~ - r_2 L) ... C~^-1 (C~ - r_{m+1} L) (C~^-1 L)^k
        let mut pl = if approx.r2.is_empty() {
            ctilde.clone()
        } else {
            let mut p = ctilde.add(1.0, &ops.l, -approx.r2[0]);
            for &r in &approx.r2[1..] {
                let a = ctilde.add(1.0, &ops.l, -r);
                p = mul_cinv(&p, cl).mul(&a);
            }
            p
        };
        for _ in 0..k {
            pl = mul_cinv(&pl, cl).mul(&ops.l);
        }
        let pl = pl.scaled(approx.b_lead()).symmetrized();

        // P_r = c_m C~^-1 (C~ - r_1 L) C~^-1 (C~ - r_2 L) ...
        let cinv: Vec<f64> = cl.iter().map(|v| 1.0 / v).collect();
        let mut pr = SparseMat::identity(n);
        for &r in &approx.r1 {
            let a = ctilde.add(1.0, &ops.l, -r);
            pr = pr.mul(&a.scale_rows(&cinv));
        }
        let pr = pr.scaled(approx.c_lead());

        let q = pl.transpose().mul(&pl.scale_rows(&cinv));
        let q = q.scaled(tau_tilde * tau_tilde).symmetrized();

        let logdet_c: f64 = cl.iter().map(|v| v.ln()).sum();
        let mut logdet_pl = n as f64 * approx.b_lead().abs().ln();
        if roots.is_empty() {
            logdet_pl += logdet_c;
        } else {
            logdet_pl += roots.iter().map(|f| f.log_abs_det()).sum::<f64>() - (roots.len() - 1) as f64 * logdet_c;
        }
        if let Some(lf) = &l_factor {
            logdet_pl += k as f64 * (lf.logdet() - logdet_c);
        }

        Ok(Self { ops, approx, tau, tau_tilde, p_l: pl, p_r: pr, q, roots, l_factor, logdet_c, logdet_pl })
    }

    pub fn n(&self) -> usize {
        self.ops.n()
    }

    pub fn beta(&self) -> f64 {
        self.approx.beta
    }

    /// log |det P_l| for the amplitude-free operator.
    pub fn logdet_pl(&self) -> f64 {
        self.logdet_pl
    }

    /// log |det (tau_tilde P_l)|, the determinant entering the likelihood.
    pub fn logdet_pl_scaled(&self) -> f64 {
        self.logdet_pl + self.n() as f64 * self.tau_tilde.ln()
    }

    pub fn logdet_c(&self) -> f64 {
        self.logdet_c
    }

    /// P_l^-1 v through the factored form.
    pub fn solve_pl(&self, v: &[f64]) -> Vec<f64> {
        let cl = &self.ops.c_lumped;
        let mut y = if self.roots.is_empty() {
            v.iter().zip(cl).map(|(a, c)| a / c).collect::<Vec<_>>()
        } else {
            let mut y = self.roots[0].solve(v);
            for f in &self.roots[1..] {
                let cy: Vec<f64> = y.iter().zip(cl).map(|(a, c)| a * c).collect();
                y = f.solve(&cy);
            }
            y
        };
        if let Some(lf) = &self.l_factor {
            for _ in 0..self.approx.l_power() {
                let cy: Vec<f64> = y.iter().zip(cl).map(|(a, c)| a * c).collect();
                y = lf.solve(&cy);
            }
        }
        let b = self.approx.b_lead();
        y.iter_mut().for_each(|v| *v /= b);
        y
    }

    pub fn apply_pr(&self, v: &[f64]) -> Vec<f64> {
        self.p_r.matvec(v)
    }

    pub fn apply_pr_t(&self, v: &[f64]) -> Vec<f64> {
        self.p_r.matvec_t(v)
    }

    /// Sigma^u v = P_r P_l^-1 C~ P_l^-T P_r^T v / tau_tilde^2
    pub fn apply_covariance(&self, v: &[f64]) -> Vec<f64> {
        let w = self.apply_pr_t(v);
        let w = self.solve_pl(&w);
        let w: Vec<f64> = w.iter().zip(&self.ops.c_lumped).map(|(a, c)| a * c).collect();
        let w = self.solve_pl(&w);
        let t2 = self.tau_tilde * self.tau_tilde;
        self.apply_pr(&w).into_iter().map(|x| x / t2).collect()
    }

    /// Column `i` (free-node index) of the covariance matrix of u.
    pub fn covariance_column(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.n() {
            return invalid(format!("node {i} out of range"));
        }
        let mut e = vec![0.0; self.n()];
        e[i] = 1.0;
        Ok(self.apply_covariance(&e))
    }

    /// Dense covariance of u. Meant for small meshes.
    pub fn covariance_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for i in 0..n {
            e[i] = 1.0;
            let col = self.apply_covariance(&e);
            e[i] = 0.0;
            for (r, v) in col.into_iter().enumerate() {
                out[(r, i)] = v;
            }
        }
        out
    }

    /// Latent sample x ~ N(0, Q^-1) from a standard normal vector z.
    pub fn latent_from_normal(&self, z: &[f64]) -> Vec<f64> {
        let b: Vec<f64> = z.iter().zip(&self.ops.c_lumped).map(|(z, c)| z * c.sqrt()).collect();
        let x = self.solve_pl(&b);
        x.into_iter().map(|v| v / self.tau_tilde).collect()
    }

    /// Field sample u = P_r x.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.n()).map(|_| rng.sample(StandardNormal)).collect();
        self.apply_pr(&self.latent_from_normal(&z))
    }

    /// Writes model.json plus Matrix Market files for P_l, P_r, Q, C~, L.
    pub fn dump(&self, dir: &Path, mesh_ref: Option<&str>) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let files = [("P_l.mtx", &self.p_l), ("P_r.mtx", &self.p_r), ("Q.mtx", &self.q), ("L.mtx", &self.ops.l)];
        for (name, m) in files {
            write_matrix_market(m, std::io::BufWriter::new(std::fs::File::create(dir.join(name))?))?;
        }
        write_matrix_market(
            &SparseMat::diag(&self.ops.c_lumped),
            std::io::BufWriter::new(std::fs::File::create(dir.join("C_lumped.mtx"))?),
        )?;
        #[derive(Serialize)]
        struct Dump<'a> {
            beta: f64,
            m: usize,
            m_beta: usize,
            beta_hat: f64,
            delta: f64,
            c: &'a [f64],
            b: &'a [f64],
            r1: &'a [f64],
            r2: &'a [f64],
            sup_err: f64,
            exact: bool,
            tau: f64,
            tau_tilde: f64,
            operator_scale: f64,
            n: usize,
            mesh: Option<&'a str>,
            matrices: [&'a str; 5],
        }
        let d = Dump {
            beta: self.approx.beta,
            m: self.approx.m,
            m_beta: self.approx.m_beta,
            beta_hat: self.approx.beta_hat,
            delta: self.approx.delta,
            c: &self.approx.c,
            b: &self.approx.b,
            r1: &self.approx.r1,
            r2: &self.approx.r2,
            sup_err: self.approx.sup_err,
            exact: self.approx.exact,
            tau: self.tau,
            tau_tilde: self.tau_tilde,
            operator_scale: self.ops.scale,
            n: self.n(),
            mesh: mesh_ref,
            matrices: ["P_l.mtx", "P_r.mtx", "Q.mtx", "L.mtx", "C_lumped.mtx"],
        };
        serde_json::to_writer_pretty(std::fs::File::create(dir.join("model.json"))?, &d)?;
        Ok(())
    }
}

/// Dense covariance of the non-fractional model with integer beta:
/// P_l = C~ (C~^-1 L)^beta, Sigma = P_l^-1 C~ P_l^-T / tau_tilde^2.
pub fn integer_covariance_dense(ops: &FemOperators, beta: usize, tau_tilde: f64) -> Result<DMatrix<f64>> {
    if beta == 0 {
        return invalid("beta must be a positive integer");
    }
    let n = ops.n();
    let l = ops.l.to_dense();
    let cinv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, ops.c_lumped.iter().map(|v| 1.0 / v)));
    let c = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&ops.c_lumped));
    let mut pl = c.clone();
    for _ in 0..beta {
        pl = &pl * &cinv * &l;
    }
    let inv = pl.clone().try_inverse().ok_or_else(|| Error::Numerical("singular P_l".into()))?;
    Ok(&inv * c * inv.transpose() / (tau_tilde * tau_tilde))
}

/// Dense covariance of the exact fractional field on the FEM space:
/// V diag(lambda^-2beta) V^T / tau_tilde^2 with (L, C~) eigenpairs.
pub fn fractional_dense_covariance(
    ops: &FemOperators,
    beta: f64,
    tau_tilde: f64,
    max_n: usize,
) -> Result<DMatrix<f64>> {
    let n = ops.n();
    if n > max_n {
        return invalid(format!("dense oracle limited to {max_n} nodes, got {n}"));
    }
    let (lam, v) = generalized_eigen(ops)?;
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let w = lam[k].powf(-2.0 * beta) / (tau_tilde * tau_tilde);
        let col = v.column(k);
        out += w * &col * col.transpose();
    }
    Ok(out)
}

/// Eigenpairs of L v = lambda C~ v, with V^T C~ V = I.
pub fn generalized_eigen(ops: &FemOperators) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = ops.n();
    let l = ops.l.to_dense();
    let s: Vec<f64> = ops.c_lumped.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut a = l.clone();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] *= s[i] * s[j];
        }
    }
    let a = (&a + a.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(a);
    let mut v = eig.eigenvectors;
    for i in 0..n {
        for j in 0..n {
            v[(i, j)] *= s[i];
        }
    }
    let lam: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if lam.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Numerical("operator is not positive definite".into()));
    }
    Ok((lam, v))
}

/// Sinc quadrature for L^-beta_frac with step k:
/// sum_j w_j (I + c_j M)^-1, M = C~^-1 L, c_j = e^{2 j k}.
pub struct QuadratureModel {
    pub beta: f64,
    pub k: f64,
    pub k_minus: usize,
    pub k_plus: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    ops: Arc<FemOperators>,
    factors: Vec<CholFactor>,
}

/// (K-, K+) = (ceil(pi^2 / (4 beta k^2)), ceil(pi^2 / (4 (1-beta) k^2))).
pub fn quadrature_counts(beta: f64, k: f64) -> Result<(usize, usize)> {
    if !(beta > 0.0 && beta < 1.0) {
        return invalid(format!("quadrature needs beta in (0, 1), got {beta}"));
    }
    if !(k > 0.0) || !k.is_finite() {
        return invalid(format!("quadrature step must be positive, got {k}"));
    }
    let pi2 = std::f64::consts::PI.powi(2);
    let km = (pi2 / (4.0 * beta * k * k)).ceil();
    let kp = (pi2 / (4.0 * (1.0 - beta) * k * k)).ceil();
    if km > 1e6 || kp > 1e6 {
        return invalid("quadrature step too small");
    }
    Ok((km as usize, kp as usize))
}

/// Quadrature nodes c_j and weights for beta in (0, 1).
pub fn quadrature_rule(beta: f64, k: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let (km, kp) = quadrature_counts(beta, k)?;
    let pre = 2.0 * k * (std::f64::consts::PI * beta).sin() / std::f64::consts::PI;
    let mut c = Vec::with_capacity(km + kp + 1);
    let mut w = Vec::with_capacity(km + kp + 1);
    for j in -(km as i64)..=(kp as i64) {
        let y = j as f64 * k;
        c.push((2.0 * y).exp());
        w.push(pre * (2.0 * beta * y).exp());
    }
    Ok((c, w))
}

impl QuadratureModel {
    pub fn new(ops: Arc<FemOperators>, beta: f64, k: f64) -> Result<Self> {
        let (k_minus, k_plus) = quadrature_counts(beta, k)?;
        let (nodes, weights) = quadrature_rule(beta, k)?;
        let ctilde = SparseMat::diag(&ops.c_lumped);
        let factors = nodes
            .iter()
            .map(|&c| CholFactor::new(&ctilde.add(1.0, &ops.l, c), Ordering::Amd))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { beta, k, k_minus, k_plus, nodes, weights, ops, factors })
    }

    /// sum_j w_j (C~ + c_j L)^-1 C~ v
    pub fn apply_direct(&self, v: &[f64]) -> Vec<f64> {
        let cv: Vec<f64> = v.iter().zip(&self.ops.c_lumped).map(|(a, c)| a * c).collect();
        let mut out = vec![0.0; v.len()];
        for (f, w) in self.factors.iter().zip(&self.weights) {
            let y = f.solve(&cv);
            out.iter_mut().zip(y).for_each(|(o, y)| *o += w * y);
        }
        out
    }

    fn apply_shift(&self, j: usize, v: &[f64]) -> Vec<f64> {
        // c_j^-beta (I + c_j M) v
        let c = self.nodes[j];
        let s = c.powf(-self.beta);
        let lv = self.ops.l.matvec(v);
        v.iter().zip(lv).zip(&self.ops.c_lumped).map(|((a, l), cl)| s * (a + c * l / cl)).collect()
    }

    /// (P_l^Q)^-1 P_r^Q v with P_l^Q = prod_j c_j^-beta (I + c_j M) and
    /// P_r^Q = w sum_i prod_{j != i} c_j^-beta (I + c_j M).
    pub fn apply_operator_form(&self, v: &[f64]) -> Vec<f64> {
        let nq = self.nodes.len();
        let pre = 2.0 * self.k * (std::f64::consts::PI * self.beta).sin() / std::f64::consts::PI;
        let mut rhs = vec![0.0; v.len()];
        for i in 0..nq {
            let mut y = v.to_vec();
            for j in 0..nq {
                if j != i {
                    y = self.apply_shift(j, &y);
                }
            }
            rhs.iter_mut().zip(y).for_each(|(r, y)| *r += pre * y);
        }
        let mut y = rhs;
        for (j, f) in self.factors.iter().enumerate() {
            let c = self.nodes[j];
            let s = c.powf(self.beta);
            let cy: Vec<f64> = y.iter().zip(&self.ops.c_lumped).map(|(a, cl)| a * cl).collect();
            y = f.solve(&cy).into_iter().map(|v| v * s).collect();
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{matern_operators, Boundary};
    use crate::mesh::{build_rect_mesh, Rect};

    fn ops(n: usize, kappa: f64) -> Arc<FemOperators> {
        let mesh = build_rect_mesh(Rect::unit(), n, n, 0.0).unwrap();
        Arc::new(matern_operators(&mesh, kappa, Boundary::Neumann).unwrap())
    }

    #[test]
    fn factored_solve_inverts_assembled_pl() {
        let o = ops(6, 3.0);
        for &(beta, m) in &[(0.75, 2), (1.4, 1), (2.0, 1), (2.6, 3)] {
            let model = SpdeModel::new(o.clone(), RationalApprox::new(beta, m).unwrap(), 1.0).unwrap();
            let v: Vec<f64> = (0..o.n()).map(|i| (i as f64).cos()).collect();
            let x = model.solve_pl(&v);
            let back = model.p_l.matvec(&x);
            let err = back.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "beta {beta} m {m}: {err}");
            assert!(model.q.is_symmetric(0.0));
            assert!(model.p_l.is_symmetric(1e-12));
        }
    }

    #[test]
    fn logdet_matches_dense() {
        let o = ops(5, 2.0);
        for &(beta, m) in &[(0.6, 1), (0.75, 3), (1.4, 2), (3.0, 1)] {
            let model = SpdeModel::new(o.clone(), RationalApprox::new(beta, m).unwrap(), 0.7).unwrap();
            let d = model.p_l.to_dense().lu().determinant().abs().ln();
            assert!((model.logdet_pl() - d).abs() < 1e-8 * d.abs().max(1.0), "{beta} {m}");
        }
    }

    #[test]
    fn beta_one_is_plain_l() {
        let o = ops(4, 2.0);
        let model = SpdeModel::new(o.clone(), RationalApprox::new(1.0, 1).unwrap(), 1.0).unwrap();
        assert!(model.p_l.add(1.0, &o.l, -1.0).norm_fro() < 1e-14 * o.l.norm_fro());
        assert!(model.p_r.add(1.0, &SparseMat::identity(o.n()), -1.0).norm_fro() == 0.0);
    }

    #[test]
    fn quadrature_counts_examples() {
        assert_eq!(quadrature_counts(0.5, 1.0).unwrap(), (5, 5));
        assert!(quadrature_counts(1.0, 1.0).is_err());
        assert!(quadrature_counts(0.5, 0.0).is_err());
    }
}
