use ratfield::covariance::{matern_approx_errors, matern_cov, SpectralMethod};
use ratfield::special::bessel_k;

#[test]
fn bessel_k_against_reference_values() {
    let cases = [
        (0.3, 1.0, 0.435076024208802023),
        (0.3, 0.01, 6.89010263829276954),
        (2.7, 3.5, 0.0482143433795732044),
        (0.0, 0.5, 0.924419071227665862),
        (1.0, 1e-6, 999999.999992784324),
        (4.9, 40.0, 1.12853453111352857e-18),
        (0.5, 1.0, 0.461068504447894558),
        (1.5, 2.0, 0.179906657952092171),
        (2.5, 1e-3, 118899799.111548788),
        (0.0, 50.0, 3.41016774978949464e-23),
        (3.3, 7.0, 0.000872511910752121008),
    ];
    for (nu, x, want) in cases {
        let got = bessel_k(nu, x).unwrap();
        assert!(((got - want) / want).abs() < 1e-12, "K_{nu}({x}) = {got}, want {want}");
    }
}

#[test]
fn matern_is_continuous_near_zero() {
    let a = matern_cov(1e-9, 0.3, 2.0, 1.0);
    assert!((a - 1.0).abs() < 1e-4);
}

#[test]
fn nu_one_is_reproduced_exactly() {
    for m in 1..=3 {
        let (l2, linf) = matern_approx_errors(1.0, SpectralMethod::Rational, m, 2.0, 201, 1e-11).unwrap();
        assert!(l2 < 1e-6 && linf < 1e-6, "m={m}: {l2} {linf}");
    }
}

#[test]
fn nu_half_pinned_errors() {
    let want = [(1, 1.3236e-2, 2.0131e-2), (2, 3.0645e-3, 6.9503e-3), (3, 1.2324e-3, 3.8139e-3)];
    let mut prev = f64::INFINITY;
    for (m, l2w, liw) in want {
        let (l2, linf) = matern_approx_errors(0.5, SpectralMethod::Rational, m, 2.0, 2001, 1e-10).unwrap();
        assert!((l2 / l2w - 1.0).abs() < 2e-3, "m={m}: L2 {l2}");
        assert!((linf / liw - 1.0).abs() < 2e-3, "m={m}: Linf {linf}");
        assert!(l2 < prev);
        prev = l2;
    }
    let (q, _) = matern_approx_errors(0.5, SpectralMethod::Quadrature, 12, 2.0, 2001, 1e-10).unwrap();
    assert!((q / 1.5339e-2 - 1.0).abs() < 2e-3, "quadrature L2 {q}");
    assert!(prev < q);
}
