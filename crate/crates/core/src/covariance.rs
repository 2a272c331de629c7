//! Matérn covariances, spectral covariances of approximations of
//! lambda^-beta and the error metrics used to compare them.

use crate::error::{invalid, Error, Result};
use crate::model::quadrature_rule;
use crate::quadrature::hankel_j0;
use crate::rational::RationalApprox;
use crate::special::{bessel_k, gamma, ln_gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Matérn field on R^2 observed with Gaussian noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub kappa: f64,
    pub phi2: f64,
    pub nu: f64,
    pub sigma2: f64,
}

impl MaternParams {
    pub const DIM: f64 = 2.0;

    pub fn new(kappa: f64, phi2: f64, nu: f64, sigma2: f64) -> Result<Self> {
        let p = Self { kappa, phi2, nu, sigma2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa", self.kappa), ("phi2", self.phi2), ("nu", self.nu)] {
            if !(v > 0.0) || !v.is_finite() {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return invalid(format!("sigma2 must be non-negative, got {}", self.sigma2));
        }
        Ok(())
    }

    /// beta = nu/2 + d/4
    pub fn beta(&self) -> f64 {
        self.nu / 2.0 + Self::DIM / 4.0
    }

    /// Practical range sqrt(8 nu) / kappa.
    pub fn range(&self) -> f64 {
        (8.0 * self.nu).sqrt() / self.kappa
    }

    pub fn kappa_from_range(nu: f64, range: f64) -> f64 {
        (8.0 * nu).sqrt() / range
    }

    /// tau such that (kappa^2 - Delta)^beta (tau u) = W has marginal variance phi2:
    /// phi2 = Gamma(nu) / (tau^2 Gamma(2 beta) (4 pi)^{d/2} kappa^{2 nu}).
    pub fn tau(&self) -> f64 {
        let b = self.beta();
        let lt2 = ln_gamma(self.nu)
            - self.phi2.ln()
            - ln_gamma(2.0 * b)
            - (Self::DIM / 2.0) * (4.0 * PI).ln()
            - 2.0 * self.nu * self.kappa.ln();
        (0.5 * lt2).exp()
    }

    /// Marginal variance implied by (kappa, nu, tau).
    pub fn phi2_from_tau(kappa: f64, nu: f64, tau: f64) -> f64 {
        let b = nu / 2.0 + Self::DIM / 4.0;
        (ln_gamma(nu)
            - 2.0 * tau.ln()
            - ln_gamma(2.0 * b)
            - (Self::DIM / 2.0) * (4.0 * PI).ln()
            - 2.0 * nu * kappa.ln())
        .exp()
    }
}

/// phi2 2^{1-nu} / Gamma(nu) (kappa h)^nu K_nu(kappa h), phi2 at h = 0.
pub fn matern_cov(h: f64, nu: f64, kappa: f64, phi2: f64) -> f64 {
    let x = kappa * h.abs();
    if x == 0.0 {
        return phi2;
    }
    let k = match bessel_k(nu, x) {
        Ok(k) => k,
        Err(_) => return phi2,
    };
    let v = phi2 * (2f64.powf(1.0 - nu) / gamma(nu)) * x.powf(nu) * k;
    if v.is_finite() {
        v
    } else {
        phi2
    }
}

/// Covariance on R^2 whose spectral density replaces (1+|w|^2/kappa^2)^{-2 beta}
/// by R(1+|w|^2/kappa^2)^2, R approximating lambda^-beta on [1, inf):
/// C_R(h) = 2 nu phi2 ∫_0^∞ R(1+s^2)^2 J0(kappa h s) s ds.
pub fn spectral_cov(h: f64, nu: f64, kappa: f64, phi2: f64, r: &(dyn Fn(f64) -> f64 + Sync), tol: f64) -> Result<f64> {
    let g = |s: f64| {
        let v = r(1.0 + s * s);
        v * v * s
    };
    let scale = 2.0 * nu * phi2;
    Ok(scale * hankel_j0(g, kappa * h.abs(), tol / scale)?)
}

/// Spectral covariance of the rational approximation with the given parameters.
pub fn rational_spectral_cov(h: f64, params: &MaternParams, ra: &RationalApprox, tol: f64) -> Result<f64> {
    check_rational(params, ra)?;
    spectral_cov(h, params.nu, params.kappa, params.phi2, &|l| ra.eval_power(l), tol)
}

fn check_rational(params: &MaternParams, ra: &RationalApprox) -> Result<()> {
    if (ra.beta - params.beta()).abs() > 1e-12 {
        return invalid(format!("approximation built for beta {} but parameters give {}", ra.beta, params.beta()));
    }
    if ra.r2.iter().any(|&r| r > 0.0 && r < 1.0) {
        return Err(Error::Numerical("spectral density has a pole on [1, inf)".into()));
    }
    // R(lambda)^2 must decay faster than lambda^-1
    if ra.l_power() + ra.r2.len() <= ra.r1.len() {
        return Err(Error::Numerical("spectral density is not integrable".into()));
    }
    Ok(())
}

/// Sinc-quadrature approximation of lambda^-beta: Q(lambda) lambda^-floor(beta).
pub struct QuadratureSpectral {
    pub beta: f64,
    pub k: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    int_part: i32,
}

impl QuadratureSpectral {
    pub fn new(beta: f64, k: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return invalid(format!("beta must be positive, got {beta}"));
        }
        let fl = beta.floor();
        let frac = beta - fl;
        if frac.abs() < 1e-12 {
            return Ok(Self { beta, k, nodes: Vec::new(), weights: Vec::new(), int_part: fl as i32 });
        }
        let (nodes, weights) = quadrature_rule(frac, k)?;
        Ok(Self { beta, k, nodes, weights, int_part: fl as i32 })
    }

    /// Number of quadrature nodes (0 when beta is an integer).
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        let base = lambda.powi(-self.int_part);
        if self.nodes.is_empty() {
            return base;
        }
        let q: f64 = self.nodes.iter().zip(&self.weights).map(|(c, w)| w / (1.0 + c * lambda)).sum();
        q * base
    }
}

/// Step k giving K- + K+ + 1 = `nodes`: midpoint of the admissible interval.
pub fn quadrature_step_for_nodes(beta_frac: f64, nodes: usize) -> Result<f64> {
    let total =
        |k: f64| -> Option<usize> { crate::model::quadrature_counts(beta_frac, k).ok().map(|(a, b)| a + b + 1) };
    if total(10.0).is_none() {
        return invalid(format!("quadrature needs beta in (0, 1), got {beta_frac}"));
    }
    // total(k) is non-increasing in k
    let find = |pred: &dyn Fn(usize) -> bool| -> f64 {
        let (mut lo, mut hi) = (1e-3, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if pred(total(mid).unwrap_or(usize::MAX)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let k_lo = find(&|t| t <= nodes);
    let k_hi = find(&|t| t < nodes);
    if total(0.5 * (k_lo + k_hi)) != Some(nodes) {
        return invalid(format!("no quadrature step gives exactly {nodes} nodes for beta {beta_frac}"));
    }
    Ok(0.5 * (k_lo + k_hi))
}

/// (normalized L2, Linf) of approx - exact on an equispaced grid of
/// `npts` points over [0, range], L2 by the trapezoid rule.
pub fn cov_errors(approx: &[f64], exact: &[f64], range: f64) -> Result<(f64, f64)> {
    if approx.len() != exact.len() || approx.len() < 2 {
        return invalid("error grids must have equal length >= 2");
    }
    let n = approx.len();
    let h = range / (n - 1) as f64;
    let trap = |f: &dyn Fn(usize) -> f64| -> f64 {
        let mut s = 0.5 * (f(0) + f(n - 1));
        for i in 1..n - 1 {
            s += f(i);
        }
        s * h
    };
    let num = trap(&|i| (approx[i] - exact[i]).powi(2));
    let den = trap(&|i| exact[i].powi(2));
    if !(den > 0.0) {
        return invalid("exact covariance vanishes on the grid");
    }
    let linf = approx.iter().zip(exact).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max);
    Ok(((num / den).sqrt(), linf))
}

/// Equispaced grid 0..=range with `npts` points.
pub fn h_grid(range: f64, npts: usize) -> Vec<f64> {
    (0..npts).map(|i| range * i as f64 / (npts - 1) as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectralMethod {
    Rational,
    Quadrature,
}

/// Errors of an approximate Matérn covariance (phi2 = 1, range r = 1) on
/// [0, range]. `order` is m for the rational method and the node count for
/// quadrature.
pub fn matern_approx_errors(
    nu: f64,
    method: SpectralMethod,
    order: usize,
    range: f64,
    npts: usize,
    tol: f64,
) -> Result<(f64, f64)> {
    let params = MaternParams::new(MaternParams::kappa_from_range(nu, 1.0), 1.0, nu, 0.0)?;
    let beta = params.beta();
    let hs = h_grid(range, npts);
    let exact: Vec<f64> = hs.iter().map(|&h| matern_cov(h, nu, params.kappa, 1.0)).collect();
    let r: Box<dyn Fn(f64) -> f64 + Sync> = match method {
        SpectralMethod::Rational => {
            let ra = RationalApprox::new(beta, order)?;
            check_rational(&params, &ra)?;
            Box::new(move |l| ra.eval_power(l))
        }
        SpectralMethod::Quadrature => {
            let frac = beta - beta.floor();
            let q = if frac < 1e-12 {
                QuadratureSpectral::new(beta, 1.0)?
            } else {
                QuadratureSpectral::new(beta, quadrature_step_for_nodes(frac, order)?)?
            };
            Box::new(move |l| q.eval(l))
        }
    };
    let approx: Vec<f64> =
        hs.par_iter().map(|&h| spectral_cov(h, nu, params.kappa, 1.0, r.as_ref(), tol)).collect::<Result<Vec<_>>>()?;
    cov_errors(&approx, &exact, range)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matern_closed_forms() {
        assert!((matern_cov(1.0, 0.5, 1.0, 1.0) - (-1.0f64).exp()).abs() < 1e-14);
        let v = matern_cov(0.5, 1.5, 2.0, 1.0);
        assert!((v - 2.0 * (-1.0f64).exp()).abs() < 1e-13);
        assert_eq!(matern_cov(0.0, 0.7, 3.0, 2.5), 2.5);
    }

    #[test]
    fn tau_roundtrip() {
        let p = MaternParams::new(10.0, 1.3, 0.5, 0.1).unwrap();
        let back = MaternParams::phi2_from_tau(p.kappa, p.nu, p.tau());
        assert!((back - 1.3).abs() < 1e-12);
    }

    #[test]
    fn error_metric_trivial_cases() {
        let e = vec![1.0, 0.5, 0.25];
        assert_eq!(cov_errors(&e, &e, 2.0).unwrap(), (0.0, 0.0));
        let a: Vec<f64> = e.iter().map(|v| v + 0.01).collect();
        assert!((cov_errors(&a, &e, 2.0).unwrap().1 - 0.01).abs() < 1e-15);
    }

    #[test]
    fn quadrature_step_interval_for_twelve_nodes() {
        let k = quadrature_step_for_nodes(0.75, 12).unwrap();
        assert!((k - 1.149).abs() < 2e-3, "{k}");
    }
}
