//! Drivers for the numerical experiments exposed by the command line tool.

use crate::covariance::{matern_cov, MaternParams};
use crate::error::{invalid, Result};
use crate::fem::{matern_operators, Boundary};
use crate::inference::{fit_matern, matern_model, FitResult, NelderMeadOptions, Observations};
use crate::mesh::{build_rect_mesh, square_mesh_nodes_per_side, Rect, TriMesh};
use crate::model::SpdeModel;
use crate::rational::RationalApprox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::sync::Arc;
use std::time::Instant;

#[derive(Clone, Debug, Serialize)]
pub struct FemErrorRow {
    pub beta: f64,
    pub nu: f64,
    pub kappa: f64,
    /// None on the exact integer path.
    pub m: Option<usize>,
    pub nodes_per_side: usize,
    pub error: f64,
    pub variance_mid: f64,
    pub seconds: f64,
}

/// Relative l2 error of the covariance between the midpoint node of the
/// unit square and every other node, against the Matérn covariance with
/// practical range `range` and unit variance.
pub fn fem_error(nodes_per_side: usize, beta: f64, m: usize, range: f64) -> Result<FemErrorRow> {
    let start = Instant::now();
    if !(beta > 0.5) {
        return invalid(format!("beta must exceed 1/2 in two dimensions, got {beta}"));
    }
    if !(range > 0.0) {
        return invalid(format!("range must be positive, got {range}"));
    }
    let nu = 2.0 * beta - 1.0;
    let kappa = MaternParams::kappa_from_range(nu, range);
    let params = MaternParams::new(kappa, 1.0, nu, 0.0)?;
    let mesh = square_mesh_nodes_per_side(Rect::unit(), nodes_per_side)?;
    let ops = Arc::new(matern_operators(&mesh, kappa, Boundary::Neumann)?);
    let approx = RationalApprox::new(beta, m)?;
    let exact = approx.exact;
    let model = SpdeModel::new(ops, approx, params.tau())?;
    let mid = mesh.nearest_node([0.5, 0.5]);
    let col = model.covariance_column(mid)?;
    let p = mesh.nodes[mid];
    let (mut num, mut den) = (0.0, 0.0);
    for (x, c) in mesh.nodes.iter().zip(&col) {
        let h = ((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)).sqrt();
        let e = matern_cov(h, nu, kappa, 1.0);
        num += (e - c).powi(2);
        den += e * e;
    }
    Ok(FemErrorRow {
        beta,
        nu,
        kappa,
        m: (!exact).then_some(m),
        nodes_per_side,
        error: (num / den).sqrt(),
        variance_mid: col[mid],
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyConfig {
    pub truth: MaternParams,
    pub repetitions: usize,
    pub replicates: usize,
    pub n_obs: usize,
    pub m: usize,
    /// Cells per side of the mesh over the extended domain.
    pub cells: usize,
    pub extension: f64,
    /// Starting values are truth * exp(U(-jitter, jitter)).
    pub jitter: f64,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            truth: MaternParams { kappa: 10.0, phi2: 1.0, nu: 0.5, sigma2: 0.1 },
            repetitions: 10,
            replicates: 10,
            n_obs: 300,
            m: 2,
            cells: 30,
            extension: 0.4,
            jitter: 0.3,
            seed: 1,
            max_iter: 400,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyRepetition {
    pub repetition: usize,
    pub start: MaternParams,
    pub fit: FitResult,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StudySummary {
    pub config: StudyConfig,
    pub repetitions: Vec<StudyRepetition>,
    pub mean: MaternParams,
    pub seconds: f64,
}

/// Data from the discretized model: u = P_r x at the mesh nodes, observed
/// at uniform locations on the unit square shared by all replicates, plus
/// Gaussian noise.
pub fn simulate_model_data<R: Rng>(
    mesh: &TriMesh,
    model: &SpdeModel,
    sigma2: f64,
    n_obs: usize,
    replicates: usize,
    rng: &mut R,
) -> Result<(Vec<[f64; 2]>, Vec<Vec<f64>>)> {
    if n_obs == 0 || replicates == 0 {
        return invalid("need at least one observation and one replicate");
    }
    if !(sigma2 >= 0.0) {
        return invalid(format!("sigma2 must be non-negative, got {sigma2}"));
    }
    let locs: Vec<[f64; 2]> = (0..n_obs).map(|_| [rng.gen(), rng.gen()]).collect();
    let a = model.ops.restrict_columns(&mesh.basis_eval_matrix(&locs)?);
    let sd = sigma2.sqrt();
    let y = (0..replicates)
        .map(|_| {
            let u = model.sample(rng);
            a.matvec(&u).into_iter().map(|v| v + sd * rng.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect();
    Ok((locs, y))
}

/// Repeated simulation and maximum likelihood estimation. Repetition r uses
/// stream r of a ChaCha8 generator seeded with `seed`.
pub fn simulate_study(cfg: &StudyConfig, mut progress: impl FnMut(&StudyRepetition)) -> Result<StudySummary> {
    cfg.truth.validate()?;
    if !(cfg.truth.sigma2 > 0.0) {
        return invalid("the study needs a positive noise variance");
    }
    if cfg.repetitions == 0 {
        return invalid("need at least one repetition");
    }
    if !(cfg.jitter >= 0.0) {
        return invalid("jitter must be non-negative");
    }
    let start = Instant::now();
    let mesh = build_rect_mesh(Rect::unit(), cfg.cells, cfg.cells, cfg.extension)?;
    let base = matern_operators(&mesh, cfg.truth.kappa, Boundary::Neumann)?;
    let truth_model = matern_model(&base, &cfg.truth, cfg.m)?;
    let mut reps = Vec::with_capacity(cfg.repetitions);
    for r in 0..cfg.repetitions {
        let t0 = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        let (locs, y) =
            simulate_model_data(&mesh, &truth_model, cfg.truth.sigma2, cfg.n_obs, cfg.replicates, &mut rng)?;
        let obs = Observations::new(&mesh, &base, locs, y)?;
        let mut jit = || if cfg.jitter > 0.0 { rng.gen_range(-cfg.jitter..cfg.jitter).exp() } else { 1.0 };
        let t = &cfg.truth;
        let start_p =
            MaternParams { kappa: t.kappa * jit(), phi2: t.phi2 * jit(), sigma2: t.sigma2 * jit(), nu: t.nu * jit() };
        let opts = NelderMeadOptions { max_iter: cfg.max_iter, ..Default::default() };
        let fit = fit_matern(&base, &obs, cfg.m, &start_p, opts)?;
        let rep = StudyRepetition { repetition: r, start: start_p, fit, seconds: t0.elapsed().as_secs_f64() };
        progress(&rep);
        reps.push(rep);
    }
    let n = reps.len() as f64;
    let mean_of = |g: fn(&MaternParams) -> f64| reps.iter().map(|r| g(&r.fit.params)).sum::<f64>() / n;
    let mean = MaternParams {
        kappa: mean_of(|p| p.kappa),
        phi2: mean_of(|p| p.phi2),
        nu: mean_of(|p| p.nu),
        sigma2: mean_of(|p| p.sigma2),
    };
    Ok(StudySummary { config: cfg.clone(), repetitions: reps, mean, seconds: start.elapsed().as_secs_f64() })
}

/// `count` field samples; sample i uses stream i of a ChaCha8 generator
/// seeded with `seed`.
pub fn draw_samples(model: &SpdeModel, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            model.sample(&mut rng)
        })
        .collect()
}
