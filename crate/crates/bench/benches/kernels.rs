use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ratfield::covariance::MaternParams;
use ratfield::inference::{log_likelihood, matern_model, Observations};
use ratfield::{build_rect_mesh, matern_operators, Boundary, CholFactor, Ordering, RationalApprox, Rect};

fn rational(c: &mut Criterion) {
    for m in [1, 3, 6] {
        c.bench_function(&format!("rational_approx_m{m}"), |b| b.iter(|| RationalApprox::new(black_box(0.75), m)));
    }
}

fn cholesky(c: &mut Criterion) {
    let mesh = build_rect_mesh(Rect::unit(), 60, 60, 0.0).unwrap();
    let base = matern_operators(&mesh, 10.0, Boundary::Neumann).unwrap();
    let p = MaternParams::new(10.0, 1.0, 0.5, 0.1).unwrap();
    let model = matern_model(&base, &p, 2).unwrap();
    c.bench_function("cholesky_amd_q_60x60_m2", |b| b.iter(|| CholFactor::new(&model.q, Ordering::Amd).unwrap()));
    let f = CholFactor::new(&model.q, Ordering::Amd).unwrap();
    let rhs = vec![1.0; model.q.nrows()];
    c.bench_function("cholesky_solve_60x60_m2", |b| b.iter(|| f.solve(black_box(&rhs))));
}

fn likelihood(c: &mut Criterion) {
    let mesh = build_rect_mesh(Rect::unit(), 30, 30, 0.4).unwrap();
    let base = matern_operators(&mesh, 10.0, Boundary::Neumann).unwrap();
    let locs: Vec<[f64; 2]> = (0..300).map(|i| [((i * 37) % 300) as f64 / 300.0, (i as f64 + 0.5) / 300.0]).collect();
    let y: Vec<Vec<f64>> = (0..10).map(|r| (0..300).map(|i| ((i + r) as f64 * 0.37).sin()).collect()).collect();
    let obs = Observations::new(&mesh, &base, locs, y).unwrap();
    let p = MaternParams::new(10.0, 1.0, 0.5, 0.1).unwrap();
    c.bench_function("loglik_30cells_300obs_10rep", |b| {
        b.iter(|| {
            let model = matern_model(&base, &p, 2).unwrap();
            log_likelihood(&model, &obs, 0.1).unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = rational, cholesky, likelihood
}
criterion_main!(benches);
