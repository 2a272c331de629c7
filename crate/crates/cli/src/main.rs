mod data;
mod report;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ratfield::convergence::convergence_study;
use ratfield::covariance::{matern_approx_errors, MaternParams, SpectralMethod};
use ratfield::experiments::{draw_samples, fem_error, simulate_study, StudyConfig};
use ratfield::inference::{fit_matern, log_likelihood_parts, matern_model, NelderMeadOptions, Observations};
use ratfield::rational::RationalApprox;
use ratfield::{build_rect_mesh, matern_operators, Boundary, Error, Rect, TriMesh};
use report::{Report, Value};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ratfield",
    version,
    about = "Fractional SPDE random fields by finite elements and rational approximation"
)]
struct Cli {
    /// Seed for stochastic commands (required by sample and simulate-study).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (directory for dump-mesh with a model); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Log level (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rational approximation coefficients for x^(beta - m_beta) on [delta, 1].
    Coeffs {
        #[arg(long, default_value_t = 0.75)]
        beta: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        m: Vec<usize>,
        /// Overrides the default 10^(-(5+m)/2).
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Errors of approximate Matérn covariances from their spectral densities.
    CovError {
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.8,1,1.4")]
        nu: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        m: Vec<usize>,
        /// Node counts of the quadrature baseline; empty to skip it.
        #[arg(long, value_delimiter = ',', default_value = "12")]
        quad_nodes: Vec<usize>,
        #[arg(long, default_value_t = 2.0)]
        range: f64,
        #[arg(long, default_value_t = 2001)]
        points: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Covariance error of the FEM model at the midpoint of the unit square.
    FemError {
        #[arg(long, value_delimiter = ',', default_value = "85")]
        nodes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.75,2,3,4")]
        beta: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        m: Vec<usize>,
        /// Practical correlation range.
        #[arg(long, default_value_t = 0.1)]
        range: f64,
    },
    /// Strong error on refined meshes and the fitted convergence rate.
    Convergence {
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        cells: Vec<usize>,
        #[arg(long, default_value_t = 0.75)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
    },
    /// Field samples at the mesh nodes, one sample per row.
    Sample {
        #[command(flatten)]
        mesh: MeshArgs,
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        n: usize,
    },
    /// Log-likelihood of observations at given parameters.
    Loglik {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        mesh: MeshArgs,
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, default_value_t = 0.1)]
        sigma2: f64,
        #[arg(long, default_value_t = 2)]
        m: usize,
    },
    /// Maximum likelihood estimate of (kappa, phi2, nu, sigma2).
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        mesh: MeshArgs,
        /// Starting values kappa,phi2,nu,sigma2.
        #[arg(long, value_delimiter = ',', default_value = "5,1,1,0.1")]
        init: Vec<f64>,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 400)]
        max_iter: usize,
    },
    /// Repeated simulation and estimation with known truth.
    SimulateStudy {
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
        #[arg(long, default_value_t = 300)]
        n_obs: usize,
        #[arg(long, default_value_t = 10.0)]
        kappa: f64,
        #[arg(long, default_value_t = 1.0)]
        phi2: f64,
        #[arg(long, default_value_t = 0.5)]
        nu: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma2: f64,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 30)]
        cells: usize,
        #[arg(long, default_value_t = 0.4)]
        extension: f64,
        #[arg(long, default_value_t = 0.3)]
        jitter: f64,
        #[arg(long, default_value_t = 400)]
        max_iter: usize,
    },
    /// Writes the mesh, and optionally the model matrices, for external use.
    DumpMesh {
        #[command(flatten)]
        mesh: MeshArgs,
        /// Also write model.json and Matrix Market files (needs --out DIR).
        #[arg(long)]
        model: bool,
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, default_value_t = 2)]
        m: usize,
    },
}

#[derive(Args, Clone)]
struct MeshArgs {
    /// Core domain x0,y0,x1,y1.
    #[arg(long, value_delimiter = ',', default_value = "0,0,1,1")]
    rect: Vec<f64>,
    /// Cells per side over the extended domain.
    #[arg(long, default_value_t = 30)]
    cells: usize,
    /// Margin added on every side of the core domain.
    #[arg(long, default_value_t = 0.0)]
    extension: f64,
}

impl MeshArgs {
    fn build(&self) -> ratfield::Result<TriMesh> {
        if self.rect.len() != 4 {
            return Err(Error::Invalid("--rect needs four numbers x0,y0,x1,y1".into()));
        }
        let r = Rect::new(self.rect[0], self.rect[1], self.rect[2], self.rect[3])?;
        build_rect_mesh(r, self.cells, self.cells, self.extension)
    }

    fn describe(&self) -> String {
        format!("rect={:?} cells={} extension={}", self.rect, self.cells, self.extension)
    }
}

#[derive(Args, Clone)]
struct FieldArgs {
    #[arg(long, default_value_t = 10.0)]
    kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    phi2: f64,
    #[arg(long, default_value_t = 0.5)]
    nu: f64,
}

impl FieldArgs {
    fn params(&self, sigma2: f64) -> ratfield::Result<MaternParams> {
        MaternParams::new(self.kappa, self.phi2, self.nu, sigma2)
    }
}

fn need_seed(seed: Option<u64>, cmd: &str) -> ratfield::Result<u64> {
    seed.ok_or_else(|| Error::Invalid(format!("{cmd} is stochastic and needs --seed")))
}

fn run(cli: &Cli) -> ratfield::Result<Report> {
    match &cli.cmd {
        Cmd::Coeffs { beta, m, delta } => {
            let mut rep = Report::new("coeffs", format!("beta={beta} m={m:?} delta={delta:?}"));
            let mmax = m.iter().copied().max().unwrap_or(1);
            let mut cols: Vec<String> =
                ["beta", "m", "m_beta", "delta", "sup_err", "exact"].iter().map(|s| s.to_string()).collect();
            cols.extend((0..=mmax).map(|i| format!("c{i}")));
            cols.extend((0..=mmax + 1).map(|i| format!("b{i}")));
            rep.columns(cols);
            for &mi in m {
                let ra = match delta {
                    Some(d) => RationalApprox::with_delta(*beta, mi, *d)?,
                    None => RationalApprox::new(*beta, mi)?,
                };
                let mut row = vec![
                    Value::F(*beta),
                    Value::U(mi as u64),
                    Value::U(ra.m_beta as u64),
                    Value::F(ra.delta),
                    Value::F(ra.sup_err),
                    Value::B(ra.exact),
                ];
                row.extend((0..=mmax).map(|i| ra.c.get(i).map_or(Value::Null, |v| Value::F(*v))));
                row.extend((0..=mmax + 1).map(|i| ra.b.get(i).map_or(Value::Null, |v| Value::F(*v))));
                rep.row(row);
            }
            Ok(rep)
        }
        Cmd::CovError { nu, m, quad_nodes, range, points, tol } => {
            let mut rep = Report::new(
                "cov-error",
                format!("nu={nu:?} m={m:?} quad_nodes={quad_nodes:?} range={range} points={points} tol={tol}"),
            );
            rep.columns(["nu", "method", "order", "l2", "linf"]);
            if *points < 2 {
                return Err(Error::Invalid("--points must be at least 2".into()));
            }
            for &v in nu {
                for &mi in m {
                    let (l2, li) = matern_approx_errors(v, SpectralMethod::Rational, mi, *range, *points, *tol)?;
                    rep.row(vec![
                        Value::F(v),
                        Value::S("rational".into()),
                        Value::U(mi as u64),
                        Value::F(l2),
                        Value::F(li),
                    ]);
                }
                for &k in quad_nodes {
                    let (l2, li) = matern_approx_errors(v, SpectralMethod::Quadrature, k, *range, *points, *tol)?;
                    rep.row(vec![
                        Value::F(v),
                        Value::S("quadrature".into()),
                        Value::U(k as u64),
                        Value::F(l2),
                        Value::F(li),
                    ]);
                }
            }
            Ok(rep)
        }
        Cmd::FemError { nodes, beta, m, range } => {
            let mut rep = Report::new("fem-error", format!("nodes={nodes:?} beta={beta:?} m={m:?} range={range}"));
            rep.columns(["nodes_per_side", "beta", "nu", "kappa", "m", "error", "variance_mid", "seconds"]);
            for &n in nodes {
                for &b in beta {
                    let integer = (b - b.round()).abs() < 1e-12;
                    let ms: Vec<usize> = if integer { vec![1] } else { m.clone() };
                    for mi in ms {
                        let r = fem_error(n, b, mi, *range)?;
                        rep.row(vec![
                            Value::U(n as u64),
                            Value::F(r.beta),
                            Value::F(r.nu),
                            Value::F(r.kappa),
                            r.m.map_or(Value::Null, |v| Value::U(v as u64)),
                            Value::F(r.error),
                            Value::F(r.variance_mid),
                            Value::F(r.seconds),
                        ]);
                    }
                }
            }
            Ok(rep)
        }
        Cmd::Convergence { cells, beta, kappa } => {
            let res = convergence_study(cells, *beta, *kappa)?;
            let mut rep =
                Report::new("convergence", format!("cells={cells:?} beta={beta} kappa={kappa} slope={}", res.slope));
            rep.columns(["cells", "h", "m", "n_modes", "error"]);
            for r in &res.rows {
                rep.row(vec![
                    Value::U(r.cells as u64),
                    Value::F(r.h),
                    Value::U(r.m as u64),
                    Value::U(r.n_modes as u64),
                    Value::F(r.error),
                ]);
            }
            rep.summary(json!({ "slope": res.slope }));
            Ok(rep)
        }
        Cmd::Sample { mesh, field, m, n } => {
            let seed = need_seed(cli.seed, "sample")?;
            let p = field.params(0.0)?;
            let tm = mesh.build()?;
            let base = matern_operators(&tm, p.kappa, Boundary::Neumann)?;
            let model = matern_model(&base, &p, *m)?;
            let mut rep = Report::new(
                "sample",
                format!("{} kappa={} phi2={} nu={} m={m} n={n} seed={seed}", mesh.describe(), p.kappa, p.phi2, p.nu),
            );
            let mut cols = vec!["sample".to_string()];
            cols.extend((0..tm.n_nodes()).map(|i| format!("n{i}")));
            rep.columns(cols);
            for (i, s) in draw_samples(&model, *n, seed).into_iter().enumerate() {
                let mut row = vec![Value::U(i as u64)];
                row.extend(base.expand(&s).into_iter().map(Value::F));
                rep.row(row);
            }
            Ok(rep)
        }
        Cmd::Loglik { data, mesh, field, sigma2, m } => {
            let p = field.params(*sigma2)?;
            let tm = mesh.build()?;
            let base = matern_operators(&tm, p.kappa, Boundary::Neumann)?;
            let (locs, y) = data::read_observations(data)?;
            let obs = Observations::new(&tm, &base, locs, y)?;
            let model = matern_model(&base, &p, *m)?;
            let parts = log_likelihood_parts(&model, &obs, *sigma2, None)?;
            let mut rep = Report::new(
                "loglik",
                format!(
                    "data={} {} kappa={} phi2={} nu={} sigma2={} m={m}",
                    data.display(),
                    mesh.describe(),
                    p.kappa,
                    p.phi2,
                    p.nu,
                    p.sigma2
                ),
            );
            rep.columns(["loglik", "logdet_pl", "logdet_c", "logdet_qxy", "quad", "nnz_qxy", "n_obs", "replicates"]);
            rep.row(vec![
                Value::F(parts.loglik),
                Value::F(parts.logdet_pl),
                Value::F(parts.logdet_c),
                Value::F(parts.logdet_qxy),
                Value::F(parts.quad),
                Value::U(parts.nnz_qxy as u64),
                Value::U(obs.n_obs() as u64),
                Value::U(obs.n_replicates() as u64),
            ]);
            Ok(rep)
        }
        Cmd::Fit { data, mesh, init, m, max_iter } => {
            if init.len() != 4 {
                return Err(Error::Invalid("--init needs kappa,phi2,nu,sigma2".into()));
            }
            let start = MaternParams::new(init[0], init[1], init[2], init[3])?;
            let tm = mesh.build()?;
            let base = matern_operators(&tm, start.kappa, Boundary::Neumann)?;
            let (locs, y) = data::read_observations(data)?;
            let obs = Observations::new(&tm, &base, locs, y)?;
            let opts = NelderMeadOptions { max_iter: *max_iter, ..Default::default() };
            let fit = fit_matern(&base, &obs, *m, &start, opts)?;
            let mut rep = Report::new(
                "fit",
                format!("data={} {} init={init:?} m={m} max_iter={max_iter}", data.display(), mesh.describe()),
            );
            rep.columns(["kappa", "phi2", "nu", "sigma2", "loglik", "iterations", "evaluations", "converged"]);
            let p = fit.params;
            rep.row(vec![
                Value::F(p.kappa),
                Value::F(p.phi2),
                Value::F(p.nu),
                Value::F(p.sigma2),
                Value::F(fit.loglik),
                Value::U(fit.iterations as u64),
                Value::U(fit.evaluations as u64),
                Value::B(fit.converged),
            ]);
            rep.summary(serde_json::to_value(&fit)?);
            Ok(rep)
        }
        Cmd::SimulateStudy {
            repetitions,
            replicates,
            n_obs,
            kappa,
            phi2,
            nu,
            sigma2,
            m,
            cells,
            extension,
            jitter,
            max_iter,
        } => {
            let seed = need_seed(cli.seed, "simulate-study")?;
            let cfg = StudyConfig {
                truth: MaternParams::new(*kappa, *phi2, *nu, *sigma2)?,
                repetitions: *repetitions,
                replicates: *replicates,
                n_obs: *n_obs,
                m: *m,
                cells: *cells,
                extension: *extension,
                jitter: *jitter,
                seed,
                max_iter: *max_iter,
            };
            let summary = simulate_study(&cfg, |r| {
                log::info!(
                    "repetition {}: kappa {:.4} phi2 {:.4} nu {:.4} sigma2 {:.4} ({:.1} s)",
                    r.repetition,
                    r.fit.params.kappa,
                    r.fit.params.phi2,
                    r.fit.params.nu,
                    r.fit.params.sigma2,
                    r.seconds
                )
            })?;
            let mut rep = Report::new("simulate-study", serde_json::to_string(&cfg)?);
            rep.columns(["repetition", "kappa", "phi2", "nu", "sigma2", "loglik", "iterations", "converged"]);
            for r in &summary.repetitions {
                let p = r.fit.params;
                rep.row(vec![
                    Value::U(r.repetition as u64),
                    Value::F(p.kappa),
                    Value::F(p.phi2),
                    Value::F(p.nu),
                    Value::F(p.sigma2),
                    Value::F(r.fit.loglik),
                    Value::U(r.fit.iterations as u64),
                    Value::B(r.fit.converged),
                ]);
            }
            let mut s = serde_json::to_value(&summary)?;
            // timings vary run to run; keep the summary reproducible
            if let Some(o) = s.as_object_mut() {
                o.remove("seconds");
                if let Some(reps) = o.get_mut("repetitions").and_then(|r| r.as_array_mut()) {
                    for r in reps {
                        if let Some(ro) = r.as_object_mut() {
                            ro.remove("seconds");
                        }
                    }
                }
            }
            rep.summary(s);
            Ok(rep)
        }
        Cmd::DumpMesh { mesh, model, field, m } => {
            let tm = mesh.build()?;
            if *model {
                let dir = cli.out.as_ref().ok_or_else(|| Error::Invalid("--model needs --out DIR".into()))?;
                std::fs::create_dir_all(dir)?;
                tm.write_dump(std::io::BufWriter::new(std::fs::File::create(dir.join("mesh.txt"))?))?;
                let p = field.params(0.0)?;
                let base = matern_operators(&tm, p.kappa, Boundary::Neumann)?;
                matern_model(&base, &p, *m)?.dump(dir, Some("mesh.txt"))?;
                let mut rep = Report::new("dump-mesh", mesh.describe());
                rep.columns(["directory", "nodes", "triangles"]);
                rep.row(vec![
                    Value::S(dir.display().to_string()),
                    Value::U(tm.n_nodes() as u64),
                    Value::U(tm.n_triangles() as u64),
                ]);
                rep.already_written();
                return Ok(rep);
            }
            let mut buf = Vec::new();
            tm.write_dump(&mut buf)?;
            Ok(Report::raw("dump-mesh", buf))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = cli.log.parse().unwrap_or(log::LevelFilter::Warn);
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        log::warn!("thread pool already initialized: {e}");
    }
    let res = run(&cli).and_then(|rep| rep.write(cli.format, cli.out.as_deref()));
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
