//! Adaptive Gauss-Kronrod integration, Wynn's epsilon algorithm and a
//! Hankel-transform driver built from them.

use crate::error::{Error, Result};
use crate::special::{bessel_j0, j0_zero};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    val: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.partial_cmp(&o.err).unwrap_or(Ordering::Equal)
    }
}

/// Globally adaptive G7-K15 on [a, b]. Returns (value, error estimate).
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> (f64, f64) {
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, val: v, err: e });
    let (mut total, mut err) = (v, e);
    let mut count = 1;
    while err > abs_tol.max(rel_tol * total.abs()) && count < 4000 {
        let p = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            heap.push(p);
            break;
        }
        let (v1, e1) = gk15(&f, p.a, m);
        let (v2, e2) = gk15(&f, m, p.b);
        total += v1 + v2 - p.val;
        err += e1 + e2 - p.err;
        heap.push(Piece { a: p.a, b: m, val: v1, err: e1 });
        heap.push(Piece { a: m, b: p.b, val: v2, err: e2 });
        count += 1;
    }
    // re-sum to shed accumulated cancellation
    let total: f64 = heap.iter().map(|p| p.val).sum();
    let err: f64 = heap.iter().map(|p| p.err).sum();
    (total, err)
}

/// Wynn epsilon extrapolation of a sequence of partial sums.
pub fn wynn_epsilon(s: &[f64]) -> f64 {
    let n = s.len();
    if n < 3 {
        return *s.last().unwrap_or(&0.0);
    }
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = s.to_vec();
    let mut best = s[n - 1];
    let mut col = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for k in 0..cur.len() - 1 {
            let d = cur[k + 1] - cur[k];
            if d == 0.0 {
                return cur[k + 1];
            }
            next.push(prev[k + 1] + 1.0 / d);
        }
        prev = cur;
        cur = next;
        col += 1;
        if col % 2 == 0 {
            if let Some(&v) = cur.last() {
                if v.is_finite() {
                    best = v;
                }
            }
        }
    }
    best
}

/// ∫_0^∞ g(s) J0(a s) ds for g decaying at least like s^{-1-eps}.
///
/// Integrates between consecutive zeros of J0(a s) and extrapolates the
/// alternating partial sums with Wynn's epsilon. For a = 0 the integral is
/// split on doubling intervals and extrapolated the same way.
pub fn hankel_j0(g: impl Fn(f64) -> f64, a: f64, tol: f64) -> Result<f64> {
    let max_pieces = 3000;
    let mut sums: Vec<f64> = Vec::new();
    let mut total = 0.0;
    let mut last_est = f64::NAN;
    let mut stable = 0;
    let piece_tol = tol * 1e-3;
    if a == 0.0 {
        let mut lo = 0.0;
        let mut hi = 1.0;
        for _ in 0..200 {
            let (v, _) = integrate(&g, lo, hi, piece_tol, 1e-13);
            total += v;
            sums.push(total);
            lo = hi;
            hi *= 2.0;
            if sums.len() >= 4 {
                let n = sums.len();
                let est = wynn_epsilon(&sums[n.saturating_sub(24)..]);
                if (est - last_est).abs() < tol && v.abs() < 1e3 * tol {
                    stable += 1;
                    if stable >= 2 {
                        return Ok(est);
                    }
                } else {
                    stable = 0;
                }
                last_est = est;
            }
        }
        return Err(Error::Numerical("Hankel transform at zero did not converge".into()));
    }
    let f = |s: f64| g(s) * bessel_j0(a * s);
    let mut lo = 0.0;
    for k in 1..=max_pieces {
        let hi = j0_zero(k) / a;
        let (v, _) = integrate(&f, lo, hi, piece_tol, 1e-13);
        total += v;
        sums.push(total);
        lo = hi;
        if k >= 6 {
            let n = sums.len();
            let est = wynn_epsilon(&sums[n.saturating_sub(20)..]);
            if (est - last_est).abs() < tol {
                stable += 1;
                if stable >= 3 {
                    return Ok(est);
                }
            } else {
                stable = 0;
            }
            last_est = est;
        }
    }
    Err(Error::Numerical(format!("Hankel transform did not converge for a = {a}")))
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1):
/// barycentric-free points (u, v) and weights summing to 1/2.
pub fn triangle_rule(n: usize) -> Vec<([f64; 2], f64)> {
    let (g, w) = gauss_legendre(n);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let u = 0.5 * (g[i] + 1.0);
        for j in 0..n {
            let v = 0.5 * (g[j] + 1.0) * (1.0 - u);
            out.push(([u, v], 0.25 * w[i] * w[j] * (1.0 - u)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((v - 2.0 / 9.0).abs() < 1e-14);
        let t: f64 = triangle_rule(4).iter().map(|(p, w)| w * p[0] * p[1]).sum();
        assert!((t - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_kronrod_polynomial_and_peak() {
        let (v, _) = integrate(|x| x.powi(5), 0.0, 2.0, 1e-14, 1e-14);
        assert!((v - 64.0 / 6.0).abs() < 1e-12);
        let (v, _) = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12, 1e-12);
        let want = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!((v - want).abs() < 1e-9 * want);
    }

    #[test]
    fn wynn_accelerates_alternating_series() {
        // ln 2 = 1 - 1/2 + 1/3 - ...
        let mut s = Vec::new();
        let mut t = 0.0;
        for k in 1..=15 {
            t += if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
            s.push(t);
        }
        assert!((wynn_epsilon(&s) - 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn known_hankel_pairs() {
        // ∫ s J0(a s) / (1+s^2)^2 ds = a K1(a) / 2
        for &a in &[0.0, 0.01, 0.5, 2.0, 8.0] {
            let v = hankel_j0(|s| s / (1.0 + s * s).powi(2), a, 1e-10).unwrap();
            let want = if a == 0.0 { 0.5 } else { a * crate::special::bessel_k(1.0, a).unwrap() / 2.0 };
            assert!((v - want).abs() < 1e-9, "a={a}: {v} vs {want}");
        }
    }
}
