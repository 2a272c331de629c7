//! Rational approximation of x^beta_hat on [delta, 1] by Chebyshev-Pade
//! (Clenshaw-Lord) and the factored form used for fractional operators.

use crate::error::{invalid, Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// 10^{-(5+m)/2}
pub fn default_delta(m: usize) -> f64 {
    10f64.powf(-(5.0 + m as f64) / 2.0)
}

/// Below this |beta_hat| the exponent is treated as an integer.
pub const INTEGER_SNAP: f64 = 1e-8;

/// (m_beta, beta_hat) with m_beta = max(1, floor(beta)) and beta_hat = beta - m_beta.
pub fn split_beta(beta: f64) -> (usize, f64) {
    let mut mb = beta.floor().max(1.0);
    let mut bh = beta - mb;
    if (bh - 1.0).abs() < INTEGER_SNAP {
        mb += 1.0;
        bh = 0.0;
    }
    if bh.abs() < INTEGER_SNAP {
        bh = 0.0;
    }
    (mb as usize, bh)
}

/// First `count` Chebyshev coefficients of f on [a, b], f = sum c_k T_k(t),
/// from N+1 Chebyshev-Lobatto samples. N is doubled from 256 until the
/// returned coefficients stop changing. Returns (coefficients, N).
pub fn chebyshev_coeffs(f: impl Fn(f64) -> f64, a: f64, b: f64, count: usize) -> (Vec<f64>, usize) {
    let mut n = 256usize;
    let mut prev = cheb_from_samples(&f, a, b, n, count);
    loop {
        let next_n = 2 * n;
        let next = cheb_from_samples(&f, a, b, next_n, count);
        let scale = next.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let diff = prev.iter().zip(&next).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        if diff <= 1e-14 * scale || next_n >= 1 << 22 {
            if diff > 1e-14 * scale {
                log::warn!("Chebyshev coefficients not converged at N = {next_n} (change {diff:e})");
            }
            return (next, next_n);
        }
        n = next_n;
        prev = next;
    }
}

fn cheb_from_samples(f: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize, count: usize) -> Vec<f64> {
    let nf = n as f64;
    let cos_tab: Vec<f64> = (0..2 * n).map(|i| (std::f64::consts::PI * i as f64 / nf).cos()).collect();
    let vals: Vec<f64> = (0..=n)
        .map(|k| {
            let t = cos_tab[k];
            let x = if k == 0 {
                b
            } else if k == n {
                a
            } else {
                0.5 * (b + a) + 0.5 * (b - a) * t
            };
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            w * f(x)
        })
        .collect();
    (0..count.min(n + 1))
        .map(|j| {
            let mut s = 0.0;
            for (k, v) in vals.iter().enumerate() {
                s += v * cos_tab[(j * k) % (2 * n)];
            }
            let c = 2.0 * s / nf;
            if j == 0 || j == n {
                c / 2.0
            } else {
                c
            }
        })
        .collect()
}

/// Clenshaw-Lord Chebyshev-Pade approximant of type (m, n) from Chebyshev
/// coefficients a_0..a_{m+n}. Returns Chebyshev coefficients of numerator
/// (degree m) and denominator (degree n).
pub fn clenshaw_lord(a: &[f64], m: usize, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() < m + n + 1 {
        return invalid(format!("need {} Chebyshev coefficients, got {}", m + n + 1, a.len()));
    }
    let lc = |i: isize| -> f64 {
        if i == 0 {
            2.0 * a[0]
        } else {
            a[i.unsigned_abs()]
        }
    };
    let mut beta = vec![1.0; n + 1];
    if n > 0 {
        let mut sys = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for r in 0..n {
            let k = (m + 1 + r) as isize;
            for j in 1..=n {
                sys[(r, j - 1)] = lc(k - j as isize);
            }
            rhs[r] = -lc(k);
        }
        let sv = sys.clone().svd(false, false).singular_values;
        let smax = sv.max();
        let smin = sv.min();
        if !(smin > 1e-14 * smax) {
            return Err(Error::Approximation(format!(
                "degenerate Pade table entry ({m}, {n}): condition {:.3e}",
                smax / smin
            )));
        }
        let sol =
            sys.lu().solve(&rhs).ok_or_else(|| Error::Approximation(format!("singular Pade system for ({m}, {n})")))?;
        for j in 1..=n {
            beta[j] = sol[j - 1];
        }
    }
    let l = m.max(n);
    let mut alpha = vec![0.0; l + 1];
    for (i, al) in alpha.iter_mut().enumerate() {
        for j in 0..=i.min(n) {
            *al += a[i - j] * beta[j];
        }
    }
    let mut p = vec![0.0; m + 1];
    for (i, &ai) in alpha.iter().enumerate() {
        for (j, &bj) in beta.iter().enumerate() {
            let d = i as isize - j as isize;
            let k = d.unsigned_abs();
            if k <= m {
                p[k] += ai * bj;
            }
        }
    }
    let mut q = vec![0.0; n + 1];
    for (k, qk) in q.iter_mut().enumerate() {
        let s: f64 = (0..=n - k).map(|i| beta[i] * beta[i + k]).sum();
        *qk = if k == 0 { s } else { 2.0 * s };
    }
    Ok((p, q))
}

/// Chebyshev series in t = (2x - a - b)/(b - a) to monomial coefficients in x.
pub fn cheb_to_monomial(c: &[f64], a: f64, b: f64) -> Vec<f64> {
    let d = c.len();
    if d == 0 {
        return Vec::new();
    }
    // coefficients in t
    let mut in_t = vec![0.0; d];
    let mut tkm1 = vec![1.0];
    let mut tk = vec![0.0, 1.0];
    in_t[0] += c[0];
    if d > 1 {
        in_t[1] += c[1];
    }
    for k in 2..d {
        let mut next = vec![0.0; k + 1];
        for (i, v) in tk.iter().enumerate() {
            next[i + 1] += 2.0 * v;
        }
        for (i, v) in tkm1.iter().enumerate() {
            next[i] -= v;
        }
        for (i, v) in next.iter().enumerate() {
            in_t[i] += c[k] * v;
        }
        tkm1 = tk;
        tk = next;
    }
    // substitute t = s x + o
    let s = 2.0 / (b - a);
    let o = -(a + b) / (b - a);
    let mut out = vec![0.0; d];
    for i in (0..d).rev() {
        // out = out * (s x + o) + in_t[i]
        let mut next = vec![0.0; d];
        for (j, v) in out.iter().enumerate() {
            if *v != 0.0 {
                next[j] += o * v;
                if j + 1 < d {
                    next[j + 1] += s * v;
                }
            }
        }
        next[0] += in_t[i];
        out = next;
    }
    out
}

/// Horner evaluation of sum p_i x^i.
pub fn poly_eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn poly_deriv_eval(p: &[f64], x: f64) -> f64 {
    p.iter().enumerate().skip(1).rev().fold(0.0, |acc, (i, &c)| acc * x + i as f64 * c)
}

/// Real roots of sum p_i x^i (companion eigenvalues, Newton polished).
/// Fails if a root has a non-negligible imaginary part.
pub fn poly_real_roots(p: &[f64]) -> Result<Vec<f64>> {
    let mut d = p.len();
    while d > 0 && p[d - 1] == 0.0 {
        d -= 1;
    }
    if d <= 1 {
        return Ok(Vec::new());
    }
    let deg = d - 1;
    let lead = p[deg];
    let mut comp = DMatrix::zeros(deg, deg);
    for i in 0..deg {
        comp[(0, i)] = -p[deg - 1 - i] / lead;
        if i + 1 < deg {
            comp[(i + 1, i)] = 1.0;
        }
    }
    let eig = comp.complex_eigenvalues();
    let mut roots = Vec::with_capacity(deg);
    for z in eig.iter() {
        if z.im.abs() > 1e-8 * (1.0 + z.re.abs()) {
            return Err(Error::Approximation(format!("complex root {} + {}i", z.re, z.im)));
        }
        let mut x = z.re;
        for _ in 0..4 {
            let fx = poly_eval(&p[..d], x);
            let dfx = poly_deriv_eval(&p[..d], x);
            if dfx == 0.0 {
                break;
            }
            let nx = x - fx / dfx;
            if poly_eval(&p[..d], nx).abs() < fx.abs() {
                x = nx;
            } else {
                break;
            }
        }
        roots.push(x);
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(roots)
}

/// q1(x)/q2(x) approximating x^beta_hat on [delta, 1], plus the root form.
///
/// `c` (length m+1) and `b` (length m+2) are monomial coefficients of q1 and
/// q2, normalized so that c_m = 1. For integer beta the representation is
/// exact: q1 = q2 = x^m and there are no roots.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RationalApprox {
    pub beta: f64,
    pub m: usize,
    pub m_beta: usize,
    pub beta_hat: f64,
    pub delta: f64,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    /// Roots of q1 (m of them).
    pub r1: Vec<f64>,
    /// Roots of q2 (m+1 of them).
    pub r2: Vec<f64>,
    pub sup_err: f64,
    pub exact: bool,
    /// Chebyshev sample count used for the coefficients.
    pub cheb_n: usize,
}

impl RationalApprox {
    pub fn new(beta: f64, m: usize) -> Result<Self> {
        Self::with_delta(beta, m, default_delta(m))
    }

    pub fn with_delta(beta: f64, m: usize, delta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return invalid(format!("beta must be positive, got {beta}"));
        }
        if m == 0 || m > 12 {
            return invalid(format!("rational degree m must be in 1..=12, got {m}"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return invalid(format!("delta must be in (0, 1), got {delta}"));
        }
        let (m_beta, beta_hat) = split_beta(beta);
        if beta_hat == 0.0 {
            let mut c = vec![0.0; m + 1];
            c[m] = 1.0;
            let mut b = vec![0.0; m + 2];
            b[m] = 1.0;
            return Ok(Self {
                beta,
                m,
                m_beta,
                beta_hat,
                delta,
                c,
                b,
                r1: Vec::new(),
                r2: Vec::new(),
                sup_err: 0.0,
                exact: true,
                cheb_n: 0,
            });
        }
        let n = m + 1;
        let f = |x: f64| x.powf(beta_hat);
        let (a, cheb_n) = chebyshev_coeffs(f, delta, 1.0, m + n + 1);
        let (pc, qc) = clenshaw_lord(&a, m, n)?;
        let mut c = cheb_to_monomial(&pc, delta, 1.0);
        let mut b = cheb_to_monomial(&qc, delta, 1.0);
        let cm = c[m];
        if cm == 0.0 || !cm.is_finite() {
            return Err(Error::Approximation("numerator has lower degree than m".into()));
        }
        c.iter_mut().for_each(|v| *v /= cm);
        b.iter_mut().for_each(|v| *v /= cm);
        if b[m + 1] == 0.0 {
            return Err(Error::Approximation("denominator has lower degree than m+1".into()));
        }
        let r1 = poly_real_roots(&c)?;
        let r2 = poly_real_roots(&b)?;
        if r1.len() != m || r2.len() != m + 1 {
            return Err(Error::Approximation("root count does not match degree".into()));
        }
        for &r in r1.iter().chain(&r2) {
            if r >= delta && r <= 1.0 {
                return Err(Error::Approximation(format!("root {r} inside [delta, 1]")));
            }
        }
        let mut ra = Self { beta, m, m_beta, beta_hat, delta, c, b, r1, r2, sup_err: 0.0, exact: false, cheb_n };
        let mut sup: f64 = 0.0;
        let npts = 10_000;
        for k in 0..=npts {
            let t = (std::f64::consts::PI * k as f64 / npts as f64).cos();
            let x = 0.5 * (1.0 + delta) + 0.5 * (1.0 - delta) * t;
            let r = ra.eval_fhat(x);
            if !(r > 0.0) {
                return Err(Error::Approximation(format!("approximant not positive at x = {x}")));
            }
            sup = sup.max((x.powf(beta_hat) - r).abs());
        }
        ra.sup_err = sup;
        Ok(ra)
    }

    /// q1(x) / q2(x)
    pub fn eval_fhat(&self, x: f64) -> f64 {
        poly_eval(&self.c, x) / poly_eval(&self.b, x)
    }

    pub fn c_lead(&self) -> f64 {
        self.c[self.m]
    }

    /// Leading denominator coefficient b_{m+1} (1 on the exact integer path).
    pub fn b_lead(&self) -> f64 {
        if self.exact {
            1.0
        } else {
            self.b[self.m + 1]
        }
    }

    /// Number of pure (C~^-1 L) factors in P_l besides the root factors.
    pub fn l_power(&self) -> usize {
        if self.exact {
            self.m_beta
        } else {
            self.m_beta - 1
        }
    }

    /// Approximation of lambda^-beta for lambda >= 1 in root form:
    /// c_m prod(1 - r1 lambda) / (b_{m+1} lambda^k prod(1 - r2 lambda)).
    pub fn eval_power(&self, lambda: f64) -> f64 {
        let mut v = self.c_lead() / self.b_lead() / lambda.powi(self.l_power() as i32);
        for &r in &self.r1 {
            v *= 1.0 - r * lambda;
        }
        for &r in &self.r2 {
            v /= 1.0 - r * lambda;
        }
        v
    }

    /// Same quantity from the monomial coefficients: p_r(lambda) / p_l(lambda).
    pub fn eval_power_monomial(&self, lambda: f64) -> f64 {
        let m = self.m;
        let mb = self.m_beta;
        let pr: f64 = self.c.iter().enumerate().map(|(i, &ci)| ci * lambda.powi((m - i) as i32)).sum();
        let pl: f64 = self.b.iter().enumerate().map(|(j, &bj)| bj * lambda.powi((m + mb) as i32 - j as i32)).sum();
        pr / pl
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_beta_cases() {
        assert_eq!(split_beta(0.75), (1, -0.25));
        assert_eq!(split_beta(1.4).0, 1);
        assert!((split_beta(1.4).1 - 0.4).abs() < 1e-15);
        assert_eq!(split_beta(2.0), (2, 0.0));
        assert_eq!(split_beta(3.0 - 1e-12), (3, 0.0));
    }

    #[test]
    fn chebyshev_of_polynomial_is_exact() {
        // x^2 on [0,1]: t = 2x - 1, x = (t+1)/2, x^2 = (t^2 + 2t + 1)/4 = 3/8 + t/2 + T2/8
        let (a, _) = chebyshev_coeffs(|x| x * x, 0.0, 1.0, 4);
        assert!((a[0] - 0.375).abs() < 1e-15);
        assert!((a[1] - 0.5).abs() < 1e-15);
        assert!((a[2] - 0.125).abs() < 1e-15);
        assert!(a[3].abs() < 1e-15);
    }

    #[test]
    fn monomial_conversion() {
        let m = cheb_to_monomial(&[0.375, 0.5, 0.125], 0.0, 1.0);
        assert!((m[0]).abs() < 1e-15 && (m[1]).abs() < 1e-15 && (m[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn roots_of_known_polynomial() {
        // (x - 2)(x + 3)(x - 0.5)
        let p = [3.0, -6.5, 0.5, 1.0];
        let r = poly_real_roots(&p).unwrap();
        assert!((r[0] + 3.0).abs() < 1e-13 && (r[1] - 0.5).abs() < 1e-13 && (r[2] - 2.0).abs() < 1e-13);
        assert!(poly_real_roots(&[1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn root_and_monomial_forms_agree() {
        for &beta in &[0.6, 0.75, 1.4, 2.3] {
            for m in 1..=4 {
                let ra = RationalApprox::new(beta, m).unwrap();
                for &lam in &[1.0, 3.7, 55.0, 1e3, 1e5] {
                    let a = ra.eval_power(lam);
                    let b = ra.eval_power_monomial(lam);
                    assert!((a - b).abs() <= 1e-10 * a.abs(), "beta {beta} m {m} lam {lam}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn integer_beta_is_exact() {
        let ra = RationalApprox::new(2.0, 3).unwrap();
        assert!(ra.exact && ra.r1.is_empty() && ra.r2.is_empty());
        assert!((ra.eval_power(7.0) - 1.0 / 49.0).abs() < 1e-16);
        assert_eq!(ra.eval_power_monomial(7.0), 1.0 / 49.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RationalApprox::new(0.0, 2).is_err());
        assert!(RationalApprox::new(-1.0, 2).is_err());
        assert!(RationalApprox::new(f64::NAN, 2).is_err());
        assert!(RationalApprox::new(0.75, 0).is_err());
    }
}
