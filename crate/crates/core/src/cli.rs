//! `otdiff` command line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::flows::{self, FlowConfig, Preconditioner};
use crate::geometry::{GaussianMixture, Graph, PointCloud, VoxelGrid};
use crate::io::{self, Column, MassPolicy};
use crate::normalize::{
    diffuse, row_normalize_apply, sinkhorn_normalize, sinkhorn_trace, spectral_truncation_apply,
    symmetric_normalize_apply, DiffusionOperator, Domain, ScalingVector, SinkhornOptions,
};
use crate::operators::{
    build_exponential_operator, build_gaussian_operator, build_gmm_operator, build_graph_operator,
    build_voxel_operator, estimate_voxel_masses, smatvec, SmoothingOperator,
};
use crate::oracle::{dense_assemble, DenseMatrix};
use crate::signal::Signal;
use crate::spectral::{estimate_laplacian_eigenvalues, top_eigenpairs, EigenOptions, EstimateModality};

#[derive(Parser, Debug)]
#[command(name = "otdiff", version, about = "Mass-preserving diffusion on graphs, point clouds, mixtures and voxel grids")]
pub struct Cli {
    /// Worker threads for matrix-vector products (1 gives bit-reproducible output).
    #[arg(long, global = true, env = "OTDIFF_THREADS")]
    pub threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compute the Sinkhorn scaling of a smoothing operator.
    Normalize(NormalizeArgs),
    /// Apply the normalized diffusion operator to a signal.
    Diffuse(DiffuseArgs),
    /// Compare mass and positivity of several normalizations on a graph.
    Compare(CompareArgs),
    /// Leading eigenpairs of the diffusion operator and Laplacian estimates.
    Eigs(EigsArgs),
    /// Record the Sinkhorn convergence error at every iteration.
    Convergence(ConvergenceArgs),
    /// Estimate voxel masses by kernel density.
    Masses(MassesArgs),
    /// Energy-distance particle flow.
    Flow(FlowArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    Exponential,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MassArg {
    /// Use the mass column when present, uniform masses otherwise.
    Column,
    /// Ignore any mass column.
    Uniform,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Linear,
    Log,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PrecondArg {
    Identity,
    Kernel,
    Qdiff,
}

#[derive(Args, Debug, Clone)]
#[command(group(ArgGroup::new("input").required(true).args(["points", "graph", "voxels", "gmm"])))]
pub struct InputArgs {
    /// Point cloud CSV (`x0,...,[mass]`).
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Graph edge list.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// One-column vertex mass CSV for `--graph`.
    #[arg(long, requires = "graph")]
    pub graph_masses: Option<PathBuf>,
    /// Sparse voxel grid file.
    #[arg(long)]
    pub voxels: Option<PathBuf>,
    /// Gaussian mixture CSV.
    #[arg(long)]
    pub gmm: Option<PathBuf>,
    /// Kernel profile for point clouds.
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,
    /// Kernel radius (point clouds, voxels, mixtures).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Graph regularizer added to every adjacency entry.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// How point cloud masses are read.
    #[arg(long, value_enum, default_value = "column")]
    pub masses: MassArg,
    /// Replace the operator by its assembled dense matrix.
    #[arg(long, hide = true)]
    pub dense: bool,
}

#[derive(Args, Debug, Clone)]
pub struct SinkhornArgs {
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value = "linear")]
    pub mode: ModeArg,
}

#[derive(Args, Debug)]
pub struct NormalizeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub sinkhorn: SinkhornArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source_signal").required(true).args(["signal", "dirac"])))]
pub struct DiffuseArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub sinkhorn: SinkhornArgs,
    /// Scaling CSV written by `normalize`; computed on the fly when absent.
    #[arg(long)]
    pub scaling: Option<PathBuf>,
    /// Signal CSV (`index,f0,...`).
    #[arg(long)]
    pub signal: Option<PathBuf>,
    /// Start from a unit impulse at this index.
    #[arg(long)]
    pub dirac: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub graph_masses: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub dirac: usize,
    /// Diffusion time of the spectral truncation.
    #[arg(long = "time", short = 't', default_value_t = 0.0)]
    pub time: f64,
    /// Number of Laplacian eigenvectors kept by the spectral truncation
    /// (defaults to all but one).
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 1e-13)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EigsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value = "linear")]
    pub mode: ModeArg,
    /// Number of eigenpairs.
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub solver_tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Intrinsic dimension used by the mixture estimate.
    #[arg(long, default_value_t = 2)]
    pub intrinsic_dim: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    /// Stop early once the error drops below this value.
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
    #[arg(long, value_enum, default_value = "linear")]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MassesArgs {
    #[arg(long)]
    pub voxels: PathBuf,
    /// Kernel radius in voxel units.
    #[arg(long, default_value_t = 1.0)]
    pub sigma_voxels: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FlowArgs {
    /// Source point cloud; a small rectangle is sampled when absent.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Target point cloud; an annulus is sampled when absent.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Sample count of the synthetic source and target.
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "qdiff")]
    pub precond: PrecondArg,
    #[arg(long, default_value_t = 0.07)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Provenance record written next to every output.
#[derive(Serialize, Debug)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: BTreeMap<String, String>,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub threads: Option<usize>,
    pub wall_time_seconds: f64,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 1;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not configure the thread pool: {e}");
        }
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            i32::from(e.exit_code())
        }
    }
}

struct Context {
    name: &'static str,
    started: Instant,
    threads: Option<usize>,
    inputs: BTreeMap<String, String>,
}

impl Context {
    fn new(name: &'static str, threads: Option<usize>) -> Self {
        Context {
            name,
            started: Instant::now(),
            threads,
            inputs: BTreeMap::new(),
        }
    }

    fn input(&mut self, key: &str, path: &Path) {
        self.inputs.insert(key.to_owned(), path.display().to_string());
    }

    fn finish(self, out: &Path, parameters: serde_json::Value, seed: Option<u64>) -> Result<()> {
        let manifest = RunManifest {
            subcommand: self.name.to_owned(),
            inputs: self.inputs,
            parameters,
            seed,
            version: env!("CARGO_PKG_VERSION").to_owned(),
            threads: self.threads,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        };
        write_json(&out.join("manifest.json"), &manifest)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Normalize(a) => cmd_normalize(a, cli.threads),
        Command::Diffuse(a) => cmd_diffuse(a, cli.threads),
        Command::Compare(a) => cmd_compare(a, cli.threads),
        Command::Eigs(a) => cmd_eigs(a, cli.threads),
        Command::Convergence(a) => cmd_convergence(a, cli.threads),
        Command::Masses(a) => cmd_masses(a, cli.threads),
        Command::Flow(a) => cmd_flow(a, cli.threads),
    }
}

enum Loaded {
    Points(PointCloud),
    Graph(Graph),
    Voxels(VoxelGrid),
    Gmm(GaussianMixture),
}

fn require_sigma(input: &InputArgs) -> Result<f64> {
    input
        .sigma
        .ok_or_else(|| Error::value("--sigma is required for this input"))
}

fn load_input(input: &InputArgs, ctx: &mut Context) -> Result<Loaded> {
    if let Some(p) = &input.points {
        ctx.input("points", p);
        let policy = match input.masses {
            MassArg::Column => MassPolicy::Column,
            MassArg::Uniform => MassPolicy::Uniform,
        };
        return Ok(Loaded::Points(io::load_point_cloud(p, policy)?));
    }
    if let Some(p) = &input.graph {
        ctx.input("graph", p);
        if let Some(m) = &input.graph_masses {
            ctx.input("graph_masses", m);
        }
        return Ok(Loaded::Graph(io::load_graph(p, input.graph_masses.as_deref())?));
    }
    if let Some(p) = &input.voxels {
        ctx.input("voxels", p);
        return Ok(Loaded::Voxels(io::load_voxel_grid(p)?));
    }
    if let Some(p) = &input.gmm {
        ctx.input("gmm", p);
        return Ok(Loaded::Gmm(io::load_gmm(p)?));
    }
    Err(Error::value("no input given"))
}

fn build_operator(input: &InputArgs, loaded: &Loaded) -> Result<SmoothingOperator> {
    let op = match loaded {
        Loaded::Points(c) => {
            let sigma = require_sigma(input)?;
            match input.kernel {
                KernelArg::Gaussian => build_gaussian_operator(c, sigma)?,
                KernelArg::Exponential => build_exponential_operator(c, sigma)?,
            }
        }
        Loaded::Graph(g) => build_graph_operator(g, input.epsilon)?,
        Loaded::Voxels(v) => build_voxel_operator(v, require_sigma(input)?)?,
        Loaded::Gmm(g) => build_gmm_operator(g, input.sigma.unwrap_or(0.0))?,
    };
    if input.dense {
        return densify(&op);
    }
    Ok(op)
}

/// Dense copy of `op`: `K_ij = S_ij / m_j`, symmetrized.
fn densify(op: &SmoothingOperator) -> Result<SmoothingOperator> {
    let s = dense_assemble(op)?;
    let m = op.masses();
    let n = op.len();
    let k = DenseMatrix::from_fn(n, |i, j| 0.5 * (s.get(i, j) / m[j] + s.get(j, i) / m[i]));
    SmoothingOperator::dense(k, m.to_vec())
}

fn sinkhorn_options(tol: f64, max_iter: usize, mode: ModeArg) -> SinkhornOptions {
    let mode = match mode {
        ModeArg::Linear => Domain::Linear,
        ModeArg::Log => Domain::Log,
    };
    SinkhornOptions::default().with_tol(tol).with_max_iter(max_iter).with_mode(mode)
}

fn mode_name(mode: ModeArg) -> &'static str {
    match mode {
        ModeArg::Linear => "linear",
        ModeArg::Log => "log",
    }
}

fn input_parameters(input: &InputArgs) -> serde_json::Value {
    json!({
        "kernel": match input.kernel { KernelArg::Gaussian => "gaussian", KernelArg::Exponential => "exponential" },
        "sigma": input.sigma,
        "epsilon": input.epsilon,
        "masses": match input.masses { MassArg::Column => "column", MassArg::Uniform => "uniform" },
        "dense": input.dense,
    })
}

#[derive(Serialize)]
struct ScalingSidecar<'a> {
    tol: f64,
    iterations: usize,
    final_error: f64,
    converged: bool,
    sigma: Option<f64>,
    epsilon: Option<f64>,
    modality: &'a str,
}

fn write_scaling(out: &Path, scaling: &ScalingVector, tol: f64, op: &SmoothingOperator) -> Result<()> {
    io::write_table(
        out.join("scaling.csv"),
        &["index", "log_scale"],
        &[Column::range(scaling.len()), Column::Real(scaling.log_scales.clone())],
    )?;
    write_json(
        &out.join("scaling.json"),
        &ScalingSidecar {
            tol,
            iterations: scaling.iterations,
            final_error: scaling.final_error,
            converged: scaling.converged,
            sigma: op.sigma(),
            epsilon: op.epsilon(),
            modality: op.modality().as_str(),
        },
    )
}

fn read_scaling(path: &Path, n: usize) -> Result<ScalingVector> {
    let (names, columns) = io::read_table(path)?;
    let col = names
        .iter()
        .position(|c| c == "log_scale")
        .ok_or_else(|| Error::format(format!("{}: missing log_scale column", path.display())))?;
    let log_scales = columns[col].clone();
    if log_scales.len() != n {
        return Err(Error::Shape {
            expected: n,
            actual: log_scales.len(),
        });
    }
    Ok(ScalingVector {
        log_scales,
        converged: true,
        final_error: f64::NAN,
        iterations: 0,
    })
}

fn cmd_normalize(a: &NormalizeArgs, threads: Option<usize>) -> Result<i32> {
    let mut ctx = Context::new("normalize", threads);
    let loaded = load_input(&a.input, &mut ctx)?;
    let op = build_operator(&a.input, &loaded)?;
    let opts = sinkhorn_options(a.sinkhorn.tol, a.sinkhorn.max_iter, a.sinkhorn.mode);
    let scaling = sinkhorn_normalize(&op, &opts)?;
    create_dir(&a.out)?;
    write_scaling(&a.out, &scaling, a.sinkhorn.tol, &op)?;
    println!(
        "converged: {}  iterations: {}  final error: {:.3e}",
        scaling.converged, scaling.iterations, scaling.final_error
    );
    let mut params = input_parameters(&a.input);
    params["tol"] = json!(a.sinkhorn.tol);
    params["max_iter"] = json!(a.sinkhorn.max_iter);
    params["mode"] = json!(mode_name(a.sinkhorn.mode));
    ctx.finish(&a.out, params, None)?;
    if !scaling.converged {
        eprintln!(
            "error: Sinkhorn did not reach tolerance {:e} in {} iterations (error {:.3e})",
            a.sinkhorn.tol, a.sinkhorn.max_iter, scaling.final_error
        );
        return Ok(2);
    }
    Ok(0)
}

fn cmd_diffuse(a: &DiffuseArgs, threads: Option<usize>) -> Result<i32> {
    let mut ctx = Context::new("diffuse", threads);
    let loaded = load_input(&a.input, &mut ctx)?;
    let op = build_operator(&a.input, &loaded)?;
    let n = op.len();
    let scaling = match &a.scaling {
        Some(p) => {
            ctx.input("scaling", p);
            read_scaling(p, n)?
        }
        None => {
            let opts = sinkhorn_options(a.sinkhorn.tol, a.sinkhorn.max_iter, a.sinkhorn.mode);
            let s = sinkhorn_normalize(&op, &opts)?;
            if !s.converged {
                return Err(Error::numerical(format!(
                    "Sinkhorn did not converge (error {:.3e})",
                    s.final_error
                )));
            }
            s
        }
    };
    let f = match (&a.signal, a.dirac) {
        (Some(p), _) => {
            ctx.input("signal", p);
            let f = io::read_signal(p)?;
            if f.rows() != n {
                return Err(Error::Shape {
                    expected: n,
                    actual: f.rows(),
                });
            }
            f
        }
        (None, Some(i)) => Signal::dirac(n, i)?,
        (None, None) => return Err(Error::value("either --signal or --dirac is required")),
    };
    let diff = DiffusionOperator::new_unconverged(op, scaling)?;
    let out = diffuse(&diff, &f, a.steps)?;
    create_dir(&a.out)?;
    io::write_signal(a.out.join("signal.csv"), &out)?;
    let before = f.mass(diff.masses());
    let after = out.mass(diff.masses());
    for c in 0..before.len() {
        println!("channel {c}: input mass {:.12e}  output mass {:.12e}", before[c], after[c]);
    }
    let mut params = input_parameters(&a.input);
    params["steps"] = json!(a.steps);
    params["dirac"] = json!(a.dirac);
    params["tol"] = json!(a.sinkhorn.tol);
    params["mode"] = json!(mode_name(a.sinkhorn.mode));
    ctx.finish(&a.out, params, None)?;
    Ok(0)
}

fn cmd_compare(a: &CompareArgs, threads: Option<usize>) -> Result<i32> {
    let mut ctx = Context::new("compare", threads);
    ctx.input("graph", &a.graph);
    if let Some(m) = &a.graph_masses {
        ctx.input("graph_masses", m);
    }
    let graph = io::load_graph(&a.graph, a.graph_masses.as_deref())?;
    let n = graph.n_vertices();
    let rank = a.rank.unwrap_or(n.saturating_sub(1).max(1));
    let op = build_graph_operator(&graph, a.epsilon)?;
    let f = Signal::dirac(n, a.dirac)?;
    let masses = op.masses().to_vec();
    let base = f.mass(&masses)[0];

    let opts = SinkhornOptions::default().with_tol(a.tol).with_max_iter(a.max_iter);
    let scaling = sinkhorn_normalize(&op, &opts)?;
    if !scaling.converged {
        log::warn!("Sinkhorn stopped at error {:.3e}", scaling.final_error);
    }
    let outputs = [
        ("raw", smatvec(&op, &f)?),
        ("row", row_normalize_apply(&op, &f)?),
        ("symmetric", symmetric_normalize_apply(&op, &f)?),
        ("spectral", spectral_truncation_apply(&graph, a.time, rank, &f)?),
        ("sinkhorn", DiffusionOperator::new_unconverged(op, scaling)?.apply(&f)?),
    ];
    let mut names = Vec::new();
    let mut mass = Vec::new();
    let mut min_entry = Vec::new();
    for (name, out) in &outputs {
        names.push((*name).to_owned());
        mass.push(out.mass(&masses)[0] / base);
        min_entry.push(out.min());
        println!("{name:<10} mass {:.12}  min_entry {:.3e}", mass.last().unwrap(), min_entry.last().unwrap());
    }
    create_dir(&a.out)?;
    io::write_table(
        a.out.join("compare.csv"),
        &["method", "mass", "min_entry"],
        &[Column::Text(names), Column::Real(mass), Column::Real(min_entry)],
    )?;
    let params = json!({
        "epsilon": a.epsilon, "dirac": a.dirac, "time": a.time, "rank": rank,
        "tol": a.tol, "max_iter": a.max_iter,
    });
    ctx.finish(&a.out, params, None)?;
    Ok(0)
}

fn cmd_eigs(a: &EigsArgs, threads: Option<usize>) -> Result<i32> {
    let mut ctx = Context::new("eigs", threads);
    let loaded = load_input(&a.input, &mut ctx)?;
    let op = build_operator(&a.input, &loaded)?;
    let opts = sinkhorn_options(a.tol, a.max_iter, a.mode);
    let diff = DiffusionOperator::normalize(op, &opts)?;
    let eig_opts = EigenOptions {
        solver_tol: a.solver_tol,
        max_iters: a.max_iters,
        seed: a.seed,
        block_size: None,
    };
    let basis = top_eigenpairs(&diff, a.k, &eig_opts)?;
    if !basis.converged {
        log::warn!("eigensolver stopped before reaching tolerance {:e}", a.solver_tol);
    }
    let estimate_mode = match &loaded {
        Loaded::Points(_) => Some(EstimateModality::Points),
        Loaded::Voxels(_) => Some(EstimateModality::Voxels),
        Loaded::Gmm(g) => Some(EstimateModality::Gmm {
            mean_trace: g.mean_trace(),
            dim: a.intrinsic_dim,
        }),
        Loaded::Graph(_) => None,
    };
    let sigma = diff.operator().sigma().filter(|s| *s > 0.0);
    let estimates: Vec<f64> = basis
        .eigenvalues
        .iter()
        .map(|&lq| match (estimate_mode, sigma) {
            (Some(m), Some(s)) => estimate_laplacian_eigenvalues(&[lq], s, m)
                .ok()
                .and_then(|v| v.first().copied())
                .unwrap_or(f64::NAN),
            (Some(EstimateModality::Gmm { mean_trace, dim }), None) if mean_trace > 0.0 => {
                -(dim as f64) / mean_trace * lq.min(1.0).ln()
            }
            _ => f64::NAN,
        })
        .collect();
    create_dir(&a.out)?;
    let k = basis.len();
    io::write_table(
        a.out.join("eigenvalues.csv"),
        &["index", "lambda_Q", "lambda_est", "residual"],
        &[
            Column::range(k),
            Column::Real(basis.eigenvalues.clone()),
            Column::Real(estimates.clone()),
            Column::Real(basis.residuals.clone()),
        ],
    )?;
    io::write_signal(a.out.join("eigenvectors.csv"), &basis.eigenvectors)?;
    for i in 0..k {
        println!("{i:>4}  lambda_Q {:.12}  lambda_est {:.6}", basis.eigenvalues[i], estimates[i]);
    }
    let mut params = input_parameters(&a.input);
    params["tol"] = json!(a.tol);
    params["k"] = json!(a.k);
    params["solver_tol"] = json!(a.solver_tol);
    params["max_iters"] = json!(a.max_iters);
    params["intrinsic_dim"] = json!(a.intrinsic_dim);
    ctx.finish(&a.out, params, Some(a.seed))?;
    Ok(0)
}

fn cmd_convergence(a: &ConvergenceArgs, threads: Option<usize>) -> Result<i32> {
    let mut ctx = Context::new("convergence", threads);
    let loaded = load_input(&a.input, &mut ctx)?;
    let op = build_operator(&a.input, &loaded)?;
    let run = sinkhorn_trace(&op, &sinkhorn_options(a.tol, a.max_iter, a.mode))?;
    create_dir(&a.out)?;
    io::write_table(
        a.out.join("convergence.csv"),
        &["iteration", "error"],
        &[Column::range(run.history.len()), Column::Real(run.history.clone())],
    )?;
    for (i, e) in run.history.iter().enumerate() {
        println!("{i:>4}  {e:.6e}");
    }
    let mut params = input_parameters(&a.input);
    params["tol"] = json!(a.tol);
    params["max_iter"] = json!(a.max_iter);
    params["mode"] = json!(mode_name(a.mode));
    ctx.finish(&a.out, params, None)?;
    Ok(0)
}

fn cmd_masses(a: &MassesArgs, threads: Option<usize>) -> Result<i32> {
    let mut ctx = Context::new("masses", threads);
    ctx.input("voxels", &a.voxels);
    let grid = io::load_voxel_grid(&a.voxels)?;
    let weighted = estimate_voxel_masses(&grid, a.sigma_voxels)?;
    create_dir(&a.out)?;
    io::write_voxel_grid(a.out.join("voxels.txt"), &weighted)?;
    let m = weighted.masses();
    let (lo, hi) = m.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    println!("{} voxels, mass range [{lo:.6e}, {hi:.6e}]", m.len());
    ctx.finish(&a.out, json!({ "sigma_voxels": a.sigma_voxels }), None)?;
    Ok(0)
}

fn cmd_flow(a: &FlowArgs, threads: Option<usize>) -> Result<i32> {
    let mut ctx = Context::new("flow", threads);
    let source = match &a.source {
        Some(p) => {
            ctx.input("source", p);
            io::load_point_cloud(p, MassPolicy::Uniform)?
        }
        None => flows::rectangle_source(a.n, a.seed)?,
    };
    let target = match &a.target {
        Some(p) => {
            ctx.input("target", p);
            io::load_point_cloud(p, MassPolicy::Uniform)?
        }
        None => flows::annulus_target(a.n, a.seed)?,
    };
    let cfg = FlowConfig {
        eta: a.eta,
        steps: a.steps,
        sigma: a.sigma,
        preconditioner: match a.precond {
            PrecondArg::Identity => Preconditioner::Identity,
            PrecondArg::Kernel => Preconditioner::Kernel,
            PrecondArg::Qdiff => Preconditioner::QDiffusion,
        },
        seed: a.seed,
        snapshot_stride: a.stride,
        ..FlowConfig::default()
    };
    let traj = flows::run_flow(&source, &target, &cfg)?;
    create_dir(&a.out)?;
    if a.source.is_none() {
        io::write_point_cloud(a.out.join("source.csv"), &source)?;
    }
    if a.target.is_none() {
        io::write_point_cloud(a.out.join("target.csv"), &target)?;
    }
    for snap in &traj.snapshots {
        io::write_point_cloud(a.out.join(format!("positions_{:05}.csv", snap.step)), &snap.positions)?;
    }
    let mut steps = vec![0];
    let mut energies = vec![traj.snapshots[0].energy];
    for r in &traj.steps {
        steps.push(r.step);
        energies.push(r.energy);
    }
    io::write_table(
        a.out.join("energy.csv"),
        &["step", "energy"],
        &[Column::Index(steps), Column::Real(energies)],
    )?;
    println!(
        "initial energy {:.6e}  final energy {:.6e}",
        traj.snapshots[0].energy,
        traj.final_energy()
    );
    let params = serde_json::to_value(&cfg).map_err(|e| Error::format(e.to_string()))?;
    ctx.finish(&a.out, params, Some(a.seed))?;
    Ok(0)
}
