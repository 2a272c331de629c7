//! End-to-end checks with one PASS/FAIL line per criterion.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratfield::convergence::convergence_study;
use ratfield::covariance::{matern_approx_errors, MaternParams, SpectralMethod};
use ratfield::experiments::{draw_samples, fem_error, simulate_study, StudyConfig};
use ratfield::inference::{log_likelihood, log_likelihood_parts, matern_model, Observations};
use ratfield::model::{fractional_dense_covariance, integer_covariance_dense, quadrature_counts};
use ratfield::{build_rect_mesh, matern_operators, Boundary, QuadratureModel, RationalApprox, Rect, SpdeModel};
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_fro(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn c1_coefficients() -> Outcome {
    const TABLE: [&[f64]; 3] = [
        &[1.69e-2, 7.69e-2, 8.06e-1, 1.0, 2.57e-1],
        &[8.08e-4, 5.30e-3, 1.98e-1, 4.05e-1, 1.07, 1.0, 1.41e-1],
        &[3.72e-5, 3.27e-4, 3.03e-2, 8.57e-2, 6.84e-1, 1.00, 1.28, 1.0, 9.17e-2],
    ];
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for m in 1..=3 {
        let ra = RationalApprox::new(0.75, m).map_err(|e| e.to_string())?;
        let mut row = Vec::new();
        for i in 0..=m {
            row.push(ra.b[i]);
            row.push(ra.c[i]);
        }
        row.push(ra.b[m + 1]);
        for (g, w) in row.iter().zip(TABLE[m - 1]) {
            worst = worst.max(((g - w) / w).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(worst <= 5e-3 && secs < 1.0, format!("max relative deviation {worst:.2e}, {secs:.3} s"))
}

fn c2_integer_exactness() -> Outcome {
    let t = Instant::now();
    let mesh = build_rect_mesh(Rect::unit(), 12, 12, 0.0).map_err(|e| e.to_string())?;
    let ops = Arc::new(matern_operators(&mesh, 5.0, Boundary::Neumann).map_err(|e| e.to_string())?);
    let mut worst: f64 = 0.0;
    for beta in [1usize, 2] {
        let model = SpdeModel::new(ops.clone(), RationalApprox::new(beta as f64, 2).unwrap(), 0.7).unwrap();
        let dense = integer_covariance_dense(&ops, beta, model.tau_tilde).map_err(|e| e.to_string())?;
        worst = worst.max(rel_fro(&model.covariance_dense(), &dense));
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst <= 1e-8 && secs < 10.0,
        format!("{} nodes, max relative Frobenius difference {worst:.2e}, {secs:.2} s", mesh.n_nodes()),
    )
}

fn c3_dense_oracle() -> Outcome {
    let t = Instant::now();
    let mesh = build_rect_mesh(Rect::unit(), 5, 5, 0.0).map_err(|e| e.to_string())?;
    let ops = Arc::new(matern_operators(&mesh, 3.0, Boundary::Neumann).map_err(|e| e.to_string())?);
    let ra = RationalApprox::new(0.75, 3).map_err(|e| e.to_string())?;
    let sup = ra.sup_err;
    let model = SpdeModel::new(ops.clone(), ra, 1.0).map_err(|e| e.to_string())?;
    let oracle = fractional_dense_covariance(&ops, 0.75, model.tau_tilde, 500).map_err(|e| e.to_string())?;
    let d = rel_fro(&model.covariance_dense(), &oracle);
    let secs = t.elapsed().as_secs_f64();
    check(d <= 10.0 * sup && secs < 10.0, format!("relative difference {d:.2e}, bound 10*sup_err = {:.2e}", 10.0 * sup))
}

fn c4_nu_one() -> Outcome {
    let mut worst: f64 = 0.0;
    for m in 1..=3 {
        let (l2, li) =
            matern_approx_errors(1.0, SpectralMethod::Rational, m, 2.0, 2001, 1e-10).map_err(|e| e.to_string())?;
        worst = worst.max(l2).max(li);
    }
    check(worst < 1e-6, format!("max L2/Linf error over m=1..3: {worst:.2e}"))
}

fn c5_nu_half() -> Outcome {
    let pinned = [(1.3236e-2, 2.0131e-2), (3.0645e-3, 6.9503e-3), (1.2324e-3, 3.8139e-3)];
    let mut l2s = Vec::new();
    let mut pins_ok = true;
    for m in 1..=3 {
        let (l2, li) =
            matern_approx_errors(0.5, SpectralMethod::Rational, m, 2.0, 2001, 1e-10).map_err(|e| e.to_string())?;
        let (pl2, pli) = pinned[m - 1];
        pins_ok &= (l2 / pl2 - 1.0).abs() < 2e-3 && (li / pli - 1.0).abs() < 2e-3;
        l2s.push(l2);
    }
    let (q, _) =
        matern_approx_errors(0.5, SpectralMethod::Quadrature, 12, 2.0, 2001, 1e-10).map_err(|e| e.to_string())?;
    let decreasing = l2s.windows(2).all(|w| w[1] < w[0]);
    check(
        decreasing && l2s[2] < q && pins_ok,
        format!(
            "rational L2 {:.4e} {:.4e} {:.4e}, quadrature K=12 L2 {q:.4e}, pinned values {}",
            l2s[0],
            l2s[1],
            l2s[2],
            if pins_ok { "match" } else { "differ" }
        ),
    )
}

fn c6_fem_table() -> Outcome {
    let t = Instant::now();
    let r = fem_error(85, 0.75, 2, 0.1).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let dev = r.error / 0.00757 - 1.0;
    check(
        dev.abs() <= 0.35 && secs < 60.0,
        format!("error {:.5} ({:+.1}% from 0.00757), {secs:.2} s", r.error, 100.0 * dev),
    )
}

fn c7_convergence() -> Outcome {
    let t = Instant::now();
    let r = convergence_study(&[2, 4, 8, 16], 0.75, 1.0).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let errs: Vec<String> = r.rows.iter().map(|x| format!("{:.3e}", x.error)).collect();
    check(
        (0.35..=0.65).contains(&r.slope) && secs < 300.0,
        format!("slope {:.3} from errors [{}], {secs:.1} s", r.slope, errs.join(", ")),
    )
}

fn dense_log_density(model: &SpdeModel, obs: &Observations, sigma2: f64) -> f64 {
    let pl_inv = model.p_l.to_dense().lu().try_inverse().unwrap();
    let pr = model.p_r.to_dense();
    let c = DMatrix::from_diagonal(&DVector::from_vec(model.ops.c_lumped.clone()));
    let su = &pr * &pl_inv * c * pl_inv.transpose() * pr.transpose() / (model.tau_tilde * model.tau_tilde);
    let a = obs.a.to_dense();
    let n = obs.n_obs();
    let sy = &a * su * a.transpose() + DMatrix::identity(n, n) * sigma2;
    let sy = (&sy + sy.transpose()) * 0.5;
    let ch = sy.cholesky().unwrap();
    let logdet = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    obs.y
        .iter()
        .map(|y| {
            let y = DVector::from_vec(y.clone());
            -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + y.dot(&ch.solve(&y)))
        })
        .sum()
}

fn c8_likelihood_oracle() -> Outcome {
    let t = Instant::now();
    let betas = [0.6, 0.75, 1.0, 1.4];
    let s2s = [0.01, 0.1];
    let mut worst: f64 = 0.0;
    let mut max_nodes = 0;
    for i in 0..20usize {
        let (beta, m, s2) = (betas[i % 4], 1 + (i / 4) % 2, s2s[(i / 8) % 2]);
        let cells = 10 + i % 4;
        let mesh = build_rect_mesh(Rect::unit(), cells, cells, 0.0).unwrap();
        max_nodes = max_nodes.max(mesh.n_nodes());
        let base = matern_operators(&mesh, 1.0, Boundary::Neumann).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let locs: Vec<[f64; 2]> = (0..50).map(|_| [rng.gen(), rng.gen()]).collect();
        let y: Vec<Vec<f64>> = (0..2).map(|_| (0..50).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let obs = Observations::new(&mesh, &base, locs, y).unwrap();
        let p = MaternParams::new(rng.gen_range(3.0..8.0), rng.gen_range(0.5..2.0), 2.0 * beta - 1.0, s2).unwrap();
        let model = matern_model(&base, &p, m).map_err(|e| e.to_string())?;
        let sparse = log_likelihood(&model, &obs, s2).map_err(|e| e.to_string())?;
        worst = worst.max((sparse - dense_log_density(&model, &obs, s2)).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && max_nodes <= 200 && secs < 60.0,
        format!("20 configurations on <= {max_nodes} nodes, max |difference| {worst:.2e}, {secs:.1} s"),
    )
}

fn c9_sampling() -> Outcome {
    let t = Instant::now();
    let mesh = build_rect_mesh(Rect::unit(), 20, 20, 0.0).unwrap();
    let base = matern_operators(&mesh, 8.0, Boundary::Neumann).unwrap();
    let p = MaternParams::new(8.0, 1.0, 0.5, 0.0).unwrap();
    let model = matern_model(&base, &p, 2).map_err(|e| e.to_string())?;
    let mid = mesh.nearest_node([0.5, 0.5]);
    let target = model.covariance_column(mid).map_err(|e| e.to_string())?[mid];
    let n = 20_000;
    let samples = draw_samples(&model, n, 2024);
    let vals: Vec<f64> = samples.iter().map(|s| s[mid]).collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = target * (2.0 / (n - 1) as f64).sqrt();
    let z = (var - target) / se;
    let secs = t.elapsed().as_secs_f64();
    check(
        z.abs() <= 3.0 && secs < 60.0,
        format!("empirical {var:.5} vs {target:.5} ({z:+.2} standard errors), {secs:.1} s"),
    )
}

fn c10_parameter_recovery() -> Outcome {
    let cfg = StudyConfig { seed: 1, ..Default::default() };
    let s = simulate_study(&cfg, |_| {}).map_err(|e| e.to_string())?;
    let m = s.mean;
    let ok = (0.45..=0.55).contains(&m.nu)
        && (m.phi2 / 1.0 - 1.0).abs() <= 0.10
        && (m.sigma2 / 0.1 - 1.0).abs() <= 0.15
        && s.seconds < 1800.0;
    check(
        ok,
        format!(
            "mean nu {:.4}, phi2 {:.4}, sigma2 {:.4}, kappa {:.3} over {} repetitions, {:.0} s",
            m.nu,
            m.phi2,
            m.sigma2,
            m.kappa,
            s.repetitions.len(),
            s.seconds
        ),
    )
}

fn c11_sparsity() -> Outcome {
    let mesh = build_rect_mesh(Rect::unit(), 15, 15, 0.1).unwrap();
    let base = matern_operators(&mesh, 1.0, Boundary::Neumann).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let locs: Vec<[f64; 2]> = (0..80).map(|_| [rng.gen(), rng.gen()]).collect();
    let obs = Observations::new(&mesh, &base, locs, vec![vec![0.0; 80]]).unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for &(beta, m) in &[(0.75, 1usize), (0.75, 2), (0.75, 3), (1.4, 2), (2.6, 1), (2.6, 2)] {
        let p = MaternParams::new(5.0, 1.0, 2.0 * beta - 1.0, 0.1).unwrap();
        let rat = matern_model(&base, &p, m).map_err(|e| e.to_string())?;
        let b_int = (m + rat.approx.m_beta) as f64;
        let pi = MaternParams::new(5.0, 1.0, 2.0 * b_int - 1.0, 0.1).unwrap();
        let int = matern_model(&base, &pi, 1).map_err(|e| e.to_string())?;
        let a = log_likelihood_parts(&rat, &obs, 0.1, None).map_err(|e| e.to_string())?.nnz_qxy;
        let b = log_likelihood_parts(&int, &obs, 0.1, None).map_err(|e| e.to_string())?.nnz_qxy;
        ok &= a == b;
        details.push(format!("beta {beta} m {m}: {a} vs {b}"));
    }
    check(ok, details.join("; "))
}

fn c12_quadrature() -> Outcome {
    let mesh = build_rect_mesh(Rect::unit(), 4, 4, 0.0).unwrap();
    let ops = Arc::new(matern_operators(&mesh, 5.0, Boundary::Neumann).unwrap());
    let q = QuadratureModel::new(ops.clone(), 0.5, 1.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let v: Vec<f64> = (0..ops.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = q.apply_direct(&v);
        let b = q.apply_operator_form(&v);
        let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    let pairs = [
        (0.1, 0.5),
        (0.25, 0.7),
        (0.5, 1.0),
        (0.75, 1.149),
        (0.3, 2.0),
        (0.9, 0.4),
        (0.6, 1.3),
        (0.45, 0.8),
        (0.2, 1.7),
        (0.8, 0.6),
    ];
    let pi2 = std::f64::consts::PI.powi(2);
    let mut counts_ok = true;
    for (b, k) in pairs {
        let want = ((pi2 / (4.0 * b * k * k)).ceil() as usize, (pi2 / (4.0 * (1.0 - b) * k * k)).ceil() as usize);
        counts_ok &= quadrature_counts(b, k).map_err(|e| e.to_string())? == want;
    }
    check(
        worst <= 1e-9 && counts_ok,
        format!(
            "{} nodes, max relative difference {worst:.2e}, K-/K+ {}",
            q.nodes.len(),
            if counts_ok { "match" } else { "differ" }
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("coefficients for beta=3/4, m=1..3", c1_coefficients),
        ("integer-order exactness", c2_integer_exactness),
        ("dense fractional oracle", c3_dense_oracle),
        ("spectral covariance exact at nu=1", c4_nu_one),
        ("error ordering at nu=1/2", c5_nu_half),
        ("FEM covariance error", c6_fem_table),
        ("convergence rate", c7_convergence),
        ("likelihood oracle", c8_likelihood_oracle),
        ("sampling consistency", c9_sampling),
        ("parameter recovery", c10_parameter_recovery),
        ("sparsity of the posterior precision", c11_sparsity),
        ("quadrature two-path equivalence", c12_quadrature),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match res {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        let _ = writeln!(out, "criterion {:>2} {tag}: {name}: {detail}", i + 1);
        let _ = out.flush();
    }
    if failed > 0 {
        let _ = writeln!(out, "{failed} criteria failed");
        std::process::exit(1);
    }
}
