//! Gaussian likelihood of noisy point observations of a rational SPDE field,
//! kriging and maximum likelihood by Nelder-Mead.

use crate::covariance::MaternParams;
use crate::error::{invalid, Error, Result};
use crate::fem::FemOperators;
use crate::mesh::TriMesh;
use crate::model::SpdeModel;
use crate::rational::RationalApprox;
use crate::sparse::{CholFactor, CholSymbolic, Ordering, SparseMat};
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

/// Replicated observations y_r = A u_r + noise at locations shared by all
/// replicates.
#[derive(Clone, Debug)]
pub struct Observations {
    pub locations: Vec<[f64; 2]>,
    /// Observation matrix restricted to the free nodes.
    pub a: SparseMat,
    pub y: Vec<Vec<f64>>,
    ata: SparseMat,
    aty: Vec<Vec<f64>>,
}

impl Observations {
    pub fn new(mesh: &TriMesh, ops: &FemOperators, locations: Vec<[f64; 2]>, y: Vec<Vec<f64>>) -> Result<Self> {
        if locations.is_empty() {
            return invalid("no observation locations");
        }
        if y.is_empty() {
            return invalid("no replicates");
        }
        for (r, yr) in y.iter().enumerate() {
            if yr.len() != locations.len() {
                return invalid(format!("replicate {r} has {} values for {} locations", yr.len(), locations.len()));
            }
            if yr.iter().any(|v| !v.is_finite()) {
                return invalid(format!("replicate {r} has a non-finite value"));
            }
        }
        let a = ops.restrict_columns(&mesh.basis_eval_matrix(&locations)?);
        let at = a.transpose();
        let ata = at.mul(&a).symmetrized();
        let aty = y.iter().map(|yr| a.matvec_t(yr)).collect();
        Ok(Self { locations, a, y, ata, aty })
    }

    pub fn n_obs(&self) -> usize {
        self.locations.len()
    }

    pub fn n_replicates(&self) -> usize {
        self.y.len()
    }
}

/// Reuses the symbolic Cholesky analysis of Q_xy across parameter values.
#[derive(Default)]
pub struct SymbolicCache {
    sym: Mutex<Option<Arc<CholSymbolic>>>,
}

impl SymbolicCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn factor(&self, a: &SparseMat) -> Result<CholFactor> {
        let mut guard = self.sym.lock().map_err(|_| Error::Numerical("symbolic cache poisoned".into()))?;
        if let Some(s) = guard.as_ref() {
            if s.matches(a) {
                return CholFactor::with_symbolic(s.clone(), a);
            }
        }
        let f = CholFactor::new(a, Ordering::Amd)?;
        *guard = Some(f.symbolic().clone());
        Ok(f)
    }
}

/// Posterior precision Q_xy = Q + P_r^T A^T A P_r / sigma^2.
pub fn posterior_precision(model: &SpdeModel, obs: &Observations, sigma2: f64) -> SparseMat {
    let prt = model.p_r.transpose();
    let b = prt.mul(&obs.ata).mul(&model.p_r);
    model.q.add(1.0, &b, 1.0 / sigma2).symmetrized()
}

#[derive(Clone, Debug, Serialize)]
pub struct LikelihoodParts {
    pub loglik: f64,
    pub logdet_pl: f64,
    pub logdet_c: f64,
    pub logdet_qxy: f64,
    pub quad: f64,
    pub nnz_qxy: usize,
}

/// Exact log-likelihood of all replicates under the rational model.
pub fn log_likelihood_parts(
    model: &SpdeModel,
    obs: &Observations,
    sigma2: f64,
    cache: Option<&SymbolicCache>,
) -> Result<LikelihoodParts> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return invalid(format!("sigma2 must be positive, got {sigma2}"));
    }
    if obs.a.ncols() != model.n() {
        return invalid("observations were built for another mesh");
    }
    let qxy = posterior_precision(model, obs, sigma2);
    let f = match cache {
        Some(c) => c.factor(&qxy)?,
        None => CholFactor::new(&qxy, Ordering::Amd)?,
    };
    let nrep = obs.n_replicates() as f64;
    let nobs = obs.n_obs() as f64;
    let logdet_pl = model.logdet_pl_scaled();
    let logdet_c = model.logdet_c();
    let logdet_qxy = f.logdet();
    let mut quad = 0.0;
    for (yr, atyr) in obs.y.iter().zip(&obs.aty) {
        let rhs: Vec<f64> = model.apply_pr_t(atyr).into_iter().map(|v| v / sigma2).collect();
        let mu = f.solve(&rhs);
        let qmu = model.q.matvec(&mu);
        let mq: f64 = mu.iter().zip(&qmu).map(|(a, b)| a * b).sum();
        let fit = obs.a.matvec(&model.apply_pr(&mu));
        let res: f64 = yr.iter().zip(&fit).map(|(y, f)| (y - f).powi(2)).sum();
        quad += mq + res / sigma2;
    }
    let loglik =
        nrep * (logdet_pl - 0.5 * logdet_c - 0.5 * logdet_qxy - 0.5 * nobs * (2.0 * PI * sigma2).ln()) - 0.5 * quad;
    if !loglik.is_finite() {
        return Err(Error::Numerical("log-likelihood is not finite".into()));
    }
    Ok(LikelihoodParts { loglik, logdet_pl, logdet_c, logdet_qxy, quad, nnz_qxy: qxy.nnz() })
}

pub fn log_likelihood(model: &SpdeModel, obs: &Observations, sigma2: f64) -> Result<f64> {
    Ok(log_likelihood_parts(model, obs, sigma2, None)?.loglik)
}

/// x | y ~ N(mu_r, Q_xy^-1) for every replicate r.
pub struct Posterior {
    pub factor: CholFactor,
    pub sigma2: f64,
    pub mu: Vec<Vec<f64>>,
}

pub fn posterior(model: &SpdeModel, obs: &Observations, sigma2: f64) -> Result<Posterior> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return invalid(format!("sigma2 must be positive, got {sigma2}"));
    }
    if obs.a.ncols() != model.n() {
        return invalid("observations were built for another mesh");
    }
    let factor = CholFactor::new(&posterior_precision(model, obs, sigma2), Ordering::Amd)?;
    let mu = obs
        .aty
        .iter()
        .map(|atyr| {
            let rhs: Vec<f64> = model.apply_pr_t(atyr).into_iter().map(|v| v / sigma2).collect();
            factor.solve(&rhs)
        })
        .collect();
    Ok(Posterior { factor, sigma2, mu })
}

#[derive(Clone, Debug, Serialize)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Predictive means A_pred P_r mu and variances diag(A_pred P_r Q_xy^-1 P_r^T A_pred^T)
/// for replicate `rep`. `a_pred` acts on the free nodes.
pub fn krige(post: &Posterior, model: &SpdeModel, a_pred: &SparseMat, rep: usize) -> Result<Prediction> {
    if rep >= post.mu.len() {
        return invalid(format!("replicate {rep} out of range"));
    }
    if a_pred.ncols() != model.n() {
        return invalid("prediction matrix does not match the model");
    }
    let mean = a_pred.matvec(&model.apply_pr(&post.mu[rep]));
    let mut variance = Vec::with_capacity(a_pred.nrows());
    let mut e = vec![0.0; a_pred.nrows()];
    for i in 0..a_pred.nrows() {
        e[i] = 1.0;
        let w = model.apply_pr_t(&a_pred.matvec_t(&e));
        e[i] = 0.0;
        let z = post.factor.solve(&w);
        variance.push(w.iter().zip(&z).map(|(a, b)| a * b).sum());
    }
    Ok(Prediction { mean, variance })
}

/// Kriging at arbitrary points of the mesh.
pub fn krige_points(
    mesh: &TriMesh,
    model: &SpdeModel,
    obs: &Observations,
    sigma2: f64,
    rep: usize,
    targets: &[[f64; 2]],
) -> Result<Prediction> {
    let post = posterior(model, obs, sigma2)?;
    let a = model.ops.restrict_columns(&mesh.basis_eval_matrix(targets)?);
    krige(&post, model, &a, rep)
}

/// Builds the rational model of a Matérn field with the given parameters on
/// operators assembled for any constant kappa.
pub fn matern_model(base: &FemOperators, params: &MaternParams, m: usize) -> Result<SpdeModel> {
    matern_model_with(base, params, RationalApprox::new(params.beta(), m)?)
}

fn matern_model_with(base: &FemOperators, params: &MaternParams, approx: RationalApprox) -> Result<SpdeModel> {
    params.validate()?;
    let ops = base.rescaled_matern(params.kappa)?;
    SpdeModel::new(Arc::new(ops), approx, params.tau())
}

/// Rational approximations keyed on (beta rounded to 1e-12, m).
#[derive(Default)]
pub struct ApproxCache {
    map: Mutex<HashMap<(i64, usize), RationalApprox>>,
}

impl ApproxCache {
    pub fn get(&self, beta: f64, m: usize) -> Result<RationalApprox> {
        let key = ((beta * 1e12).round() as i64, m);
        if let Some(a) = self.map.lock().ok().and_then(|g| g.get(&key).cloned()) {
            return Ok(a);
        }
        let a = RationalApprox::new(beta, m)?;
        if let Ok(mut g) = self.map.lock() {
            g.insert(key, a.clone());
        }
        Ok(a)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop when the simplex diameter drops below this.
    pub x_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iter: 400, x_tol: 1e-6, initial_step: 0.25 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes f by the Nelder-Mead simplex method (reflection 1, expansion
/// 2, contraction 1/2, shrink 1/2). Non-finite values count as +inf.
pub fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: NelderMeadOptions) -> NelderMeadResult {
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += opts.initial_step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, &mut evals)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = idx.iter().map(|&i| pts[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        let diam = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if diam < opts.x_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (c - w)).collect() };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let xc = if fr < vals[n] { along(0.5) } else { along(-0.5) };
        let fc = eval(&xc, &mut evals);
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            let p: Vec<f64> = pts[i].iter().zip(&pts[0]).map(|(a, b)| b + 0.5 * (a - b)).collect();
            vals[i] = eval(&p, &mut evals);
            pts[i] = p;
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    NelderMeadResult { x: pts[best].clone(), fx: vals[best], iterations, evaluations: evals, converged }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub params: MaternParams,
    pub loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Bounds on nu during optimization.
pub const NU_RANGE: (f64, f64) = (0.05, 4.0);

/// Lower bound on the nugget during optimization.
pub const SIGMA2_MIN: f64 = 1e-12;

fn params_from_theta(t: &[f64]) -> MaternParams {
    MaternParams { kappa: t[0].exp(), phi2: t[1].exp(), sigma2: t[2].exp(), nu: t[3].exp() }
}

/// Maximum likelihood estimate of (kappa, phi2, sigma2, nu) over their logs.
pub fn fit_matern(
    base: &FemOperators,
    obs: &Observations,
    m: usize,
    start: &MaternParams,
    opts: NelderMeadOptions,
) -> Result<FitResult> {
    start.validate()?;
    if !(start.sigma2 > 0.0) {
        return invalid("starting sigma2 must be positive");
    }
    let cache = SymbolicCache::new();
    let approx = ApproxCache::default();
    let negll = |t: &[f64]| -> f64 {
        let p = params_from_theta(t);
        if !(p.nu >= NU_RANGE.0 && p.nu <= NU_RANGE.1) || p.sigma2 < SIGMA2_MIN || t.iter().any(|v| v.abs() > 30.0) {
            return f64::INFINITY;
        }
        let model = match approx.get(p.beta(), m).and_then(|a| matern_model_with(base, &p, a)) {
            Ok(m) => m,
            Err(e) => {
                log::debug!("model failed at {p:?}: {e}");
                return f64::INFINITY;
            }
        };
        match log_likelihood_parts(&model, obs, p.sigma2, Some(&cache)) {
            Ok(l) => -l.loglik,
            Err(e) => {
                log::debug!("likelihood failed at {p:?}: {e}");
                f64::INFINITY
            }
        }
    };
    let x0 = [start.kappa.ln(), start.phi2.ln(), start.sigma2.ln(), start.nu.ln()];
    let res = nelder_mead(negll, &x0, opts);
    if !res.fx.is_finite() {
        return Err(Error::Numerical("likelihood could not be evaluated near the starting point".into()));
    }
    Ok(FitResult {
        params: params_from_theta(&res.x),
        loglik: -res.fx,
        iterations: res.iterations,
        evaluations: res.evaluations,
        converged: res.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(f, &[-1.2, 1.0], NelderMeadOptions { max_iter: 2000, x_tol: 1e-10, initial_step: 0.5 });
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn nelder_mead_ignores_infinite_region() {
        let f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::NAN
            } else {
                (x[0] - 0.3).powi(2)
            }
        };
        let r = nelder_mead(f, &[1.0], NelderMeadOptions::default());
        assert!((r.x[0] - 0.3).abs() < 1e-5);
    }
}
