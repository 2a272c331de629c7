use ratfield::rational::{default_delta, RationalApprox};

// b_0, c_0, b_1, c_1, ... b_{m+1} for beta = 3/4, c_m = 1.
const TABLE: [&[f64]; 3] = [
    &[1.69e-2, 7.69e-2, 8.06e-1, 1.0, 2.57e-1],
    &[8.08e-4, 5.30e-3, 1.98e-1, 4.05e-1, 1.07, 1.0, 1.41e-1],
    &[3.72e-5, 3.27e-4, 3.03e-2, 8.57e-2, 6.84e-1, 1.00, 1.28, 1.0, 9.17e-2],
];

fn interleaved(ra: &RationalApprox) -> Vec<f64> {
    let mut row = Vec::new();
    for i in 0..=ra.m {
        row.push(ra.b[i]);
        row.push(ra.c[i]);
    }
    row.push(ra.b[ra.m + 1]);
    row
}

#[test]
fn coefficients_match_reference_values() {
    for m in 1..=3 {
        let ra = RationalApprox::new(0.75, m).unwrap();
        let row = interleaved(&ra);
        for (got, want) in row.iter().zip(TABLE[m - 1]) {
            assert!((got - want).abs() <= 5e-3 * want.abs(), "m={m}: {got} vs {want}");
        }
    }
}

#[test]
fn sup_error_decays_at_fixed_delta() {
    let errs: Vec<f64> = (1..=6).map(|m| RationalApprox::with_delta(0.75, m, 1e-3).unwrap().sup_err).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    // least squares slope of log err against sqrt(m)
    let xs: Vec<f64> = (1..=6).map(|m| (m as f64).sqrt()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 6.0, ys.iter().sum::<f64>() / 6.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let pi = std::f64::consts::PI;
    assert!((slope + pi).abs() <= 0.3 * pi, "slope {slope}");
}

#[test]
fn sup_error_with_default_delta_is_endpoint_dominated() {
    for m in 1..=3 {
        let ra = RationalApprox::new(0.75, m).unwrap();
        let d = default_delta(m);
        let at_delta = (d.powf(-0.25) - ra.eval_fhat(d)).abs();
        assert!((at_delta - ra.sup_err).abs() <= 1e-6 * ra.sup_err, "m={m}");
    }
}

#[test]
fn roots_are_real_and_outside_interval() {
    for k in 1..=18 {
        let beta = 0.05 * k as f64 + 0.05;
        for m in 1..=5 {
            let ra = RationalApprox::new(beta, m).unwrap();
            if ra.exact {
                continue;
            }
            assert_eq!(ra.r1.len(), m);
            assert_eq!(ra.r2.len(), m + 1);
            for &r in ra.r1.iter().chain(&ra.r2) {
                assert!(r < ra.delta || r > 1.0, "beta {beta} m {m}: root {r}");
            }
        }
    }
}

#[test]
fn same_input_same_bits() {
    let a = RationalApprox::new(1.37, 3).unwrap();
    let b = RationalApprox::new(1.37, 3).unwrap();
    assert_eq!(a.c, b.c);
    assert_eq!(a.b, b.b);
}
