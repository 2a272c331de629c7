//! Modified Bessel function K_nu, zeros of J_0, and a few helpers.

use crate::error::{invalid, Result};
use std::f64::consts::PI;

// Taylor coefficients of 1/Gamma(z) = sum_{k>=1} G[k-1] z^k.
const RGAMMA: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_9,
    -0.042_002_635_034_095_24,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_34,
    -0.009_621_971_527_876_974,
    0.007_218_943_246_663_1,
    -0.001_165_167_591_859_065,
    -0.000_215_241_674_114_951,
    0.000_128_050_282_388_116_2,
    -2.013_485_478_078_824e-5,
    -1.250_493_482_142_671e-6,
    1.133_027_231_981_696e-6,
    -2.056_338_416_977_607e-7,
    6.116_095_104_481_416e-9,
    5.002_007_644_469_223e-9,
    -1.181_274_570_487_02e-9,
    1.043_426_711_691_1e-10,
    7.782_263_439_905_071e-12,
    -3.696_805_618_642_206e-12,
    5.100_370_287_454_476e-13,
    -2.058_326_053_566_507e-14,
    -5.348_122_539_423_018e-15,
    1.226_778_628_238_261e-15,
    -1.181_259_301_697_459e-16,
];

/// gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu), gam2 = (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2,
/// plus 1/Gamma(1+mu) and 1/Gamma(1-mu), for |mu| <= 1/2.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    // 1/Gamma(1+mu) = sum G[k] mu^k
    let mut even = 0.0;
    let mut odd = 0.0;
    let mut p = 1.0;
    for (k, g) in RGAMMA.iter().enumerate() {
        if k % 2 == 0 {
            even += g * p;
        } else {
            odd += g * p;
        }
        p *= mu;
    }
    let gampl = even + odd;
    let gammi = even - odd;
    // odd part / mu without dividing by mu
    let mut odd_over_mu = 0.0;
    let mut p = 1.0;
    for k in (1..RGAMMA.len()).step_by(2) {
        odd_over_mu += RGAMMA[k] * p;
        p *= mu * mu;
    }
    (-odd_over_mu, even, gampl, gammi)
}

/// Modified Bessel function of the second kind K_nu(x), x > 0.
///
/// Temme's series for x < 2, Steed's continued fraction otherwise, then
/// forward recurrence in the order.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return invalid(format!("bessel_k needs x > 0, got {x}"));
    }
    if !nu.is_finite() {
        return invalid("bessel_k needs a finite order");
    }
    let nu = nu.abs();
    let nl = (nu + 0.5).floor();
    let mu = nu - nl;
    let mu2 = mu * mu;
    let (mut kmu, mut k1);
    if x < 2.0 {
        let x2 = 0.5 * x;
        let pimu = PI * mu;
        let fact = if pimu.abs() < 1e-15 { 1.0 } else { pimu / pimu.sin() };
        let d = -x2.ln();
        let e = mu * d;
        let fact2 = if e.abs() < 1e-15 { 1.0 } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut c = 1.0;
        let dd = x2 * x2;
        let mut sum1 = p;
        let mut i = 1.0;
        loop {
            ff = (i * ff + p + q) / (i * i - mu2);
            c *= dd / i;
            p /= i - mu;
            q /= i + mu;
            let del = c * ff;
            sum += del;
            let del1 = c * (p - i * ff);
            sum1 += del1;
            if del.abs() < sum.abs() * 1e-17 || i > 500.0 {
                break;
            }
            i += 1.0;
        }
        kmu = sum;
        k1 = sum1 * 2.0 / x;
    } else {
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut delh = d;
        let mut h = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - mu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        let mut i = 1.0;
        loop {
            a -= 2.0 * i;
            c = -a * c / (i + 1.0);
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < 1e-17 || i > 10_000.0 {
                break;
            }
            i += 1.0;
        }
        h *= a1;
        kmu = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
        k1 = kmu * (mu + x + 0.5 - h) / x;
    }
    let mut order = mu;
    for _ in 0..nl as usize {
        let next = 2.0 * (order + 1.0) / x * k1 + kmu;
        kmu = k1;
        k1 = next;
        order += 1.0;
    }
    Ok(kmu)
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

/// k-th positive zero of J_0 (k >= 1).
pub fn j0_zero(k: usize) -> f64 {
    let b = (k as f64 - 0.25) * PI;
    let b8 = 8.0 * b;
    let mut z = b + 1.0 / b8 - 124.0 / (3.0 * b8.powi(3));
    for _ in 0..6 {
        let j1 = libm::j1(z);
        if j1 == 0.0 {
            break;
        }
        let step = libm::j0(z) / j1;
        z += step;
        if step.abs() < 1e-16 * z {
            break;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_integer_closed_forms() {
        let k12 = bessel_k(0.5, 1.0).unwrap();
        let want = (PI / 2.0).sqrt() * (-1.0f64).exp();
        assert!((k12 - want).abs() < 1e-14 * want);
        let k32 = bessel_k(1.5, 2.0).unwrap();
        let want = (PI / 4.0).sqrt() * (-2.0f64).exp() * 1.5;
        assert!((k32 - want).abs() < 1e-14 * want);
        let small = bessel_k(0.5, 0.3).unwrap();
        let want = (PI / 0.6).sqrt() * (-0.3f64).exp();
        assert!((small - want).abs() < 1e-14 * want);
    }

    #[test]
    fn rejects_nonpositive_argument() {
        assert!(bessel_k(1.0, 0.0).is_err());
        assert!(bessel_k(1.0, -1.0).is_err());
    }

    #[test]
    fn j0_zeros() {
        assert!((j0_zero(1) - 2.404_825_557_695_773).abs() < 1e-13);
        assert!((j0_zero(2) - 5.520_078_110_286_311).abs() < 1e-13);
        assert!(libm::j0(j0_zero(40)).abs() < 1e-14);
    }
}
