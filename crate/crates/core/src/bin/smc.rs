use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use smc::bench::{self, BenchConfig};
use smc::estimators::{self, SolverConfig};
use smc::io::{self, MatrixFile};
use smc::packing::{self, DEFAULT_CONSTANTS, DEFAULT_MAX_RESAMPLES, DEFAULT_SET_CAP};
use smc::par::Execution;
use smc::rates;
use smc::simulate::{self, ModelFamily, NoiseKind};
use smc::{Error, Observation, StructureSpec};

#[derive(Parser)]
#[command(
    name = "smc",
    version,
    about = "Structured matrix estimation from noisy, incomplete observations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a factorization from a model family.
    Gen(GenArgs),
    /// Mask and perturb a matrix.
    Observe(ObserveArgs),
    /// Estimate θ* from an observation.
    Estimate(EstimateArgs),
    /// Rates, lower bounds, covering numbers and the critical radius.
    Rates(RatesArgs),
    /// Packings, sign embeddings and hypothesis sets.
    Packing(PackingArgs),
    /// Run a Monte Carlo experiment.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Family as a JSON file or inline JSON, e.g. '{"family":"sbm","n":6,"k":2}'.
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Factorization output (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    theta_out: Option<PathBuf>,
    #[arg(long)]
    spec_out: Option<PathBuf>,
}

#[derive(Args)]
struct ObserveArgs {
    /// θ* as a matrix file.
    #[arg(long)]
    theta: PathBuf,
    #[arg(long)]
    p: f64,
    /// Noise as a JSON file or inline JSON, e.g. '{"kind":"gaussian","sigma":1}'.
    #[arg(long, default_value = r#"{"kind":"none"}"#)]
    noise: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Bcd,
    LeastSquares,
    Svt,
    Adaptive,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    obs: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Structure spec file; required by every method except svt.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Threshold for svt, penalty weight for adaptive.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 2_000_000)]
    exhaustive_limit: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RatesArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, default_value_t = rates::DEFAULT_CONSTANT)]
    c_frob: f64,
    #[arg(long, default_value_t = rates::DEFAULT_CONSTANT)]
    c_spec: f64,
    /// Radius `u` of the covering computations (bounded specs only).
    #[arg(long)]
    u: Option<f64>,
    /// Covering scale ε for the covering-number terms.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PackingKind {
    Tz,
    Tb,
    Code,
    Embed,
}

#[derive(Args)]
struct PackingArgs {
    #[arg(long, value_enum)]
    kind: PackingKind,
    /// Structure spec (tz, tb).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, default_value_t = 0.1)]
    c0: f64,
    #[arg(long, default_value_t = DEFAULT_SET_CAP)]
    cap: usize,
    /// Ambient dimension (code, embed).
    #[arg(long)]
    k: Option<usize>,
    /// Sparsity (code, embed).
    #[arg(long)]
    s: Option<usize>,
    /// Embedding dimension (embed).
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_RESAMPLES)]
    max_resamples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// CSV output; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON output.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Record wall time in the `seconds` column.
    #[arg(long)]
    timing: bool,
}

/// Parse a JSON argument given either inline or as a path.
fn json_arg<T: DeserializeOwned>(arg: &str) -> smc::Result<T> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        Ok(serde_json::from_str(trimmed)?)
    } else {
        io::read_json(arg)
    }
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> smc::Result<()> {
    match out {
        Some(path) => io::write_json(path, value),
        None => {
            let text = io::to_json(value)?;
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn require<T>(value: Option<T>, flag: &str) -> smc::Result<T> {
    value.ok_or_else(|| Error::Parameter(format!("--{flag} is required here")))
}

fn gen(a: GenArgs) -> smc::Result<()> {
    let family: ModelFamily = json_arg(&a.family)?;
    let (f, spec) = simulate::generate(&family, a.seed)?;
    if let Some(path) = &a.theta_out {
        io::write_json(path, &MatrixFile::from(&f.assemble()?))?;
    }
    if let Some(path) = &a.spec_out {
        io::write_json(path, &spec)?;
    }
    emit(a.out.as_deref(), &f)
}

fn observe(a: ObserveArgs) -> smc::Result<()> {
    let theta: DMatrix<f64> = DMatrix::try_from(io::read_json::<MatrixFile>(&a.theta)?)?;
    let noise: NoiseKind = json_arg(&a.noise)?;
    let (obs, _) = simulate::observe_sampled(&theta, a.p, &noise, a.seed)?;
    emit(a.out.as_deref(), &obs)
}

fn estimate(a: EstimateArgs) -> smc::Result<()> {
    let obs: Observation = io::read_json(&a.obs)?;
    let cfg = SolverConfig {
        restarts: a.restarts,
        max_iterations: a.max_iterations,
        tol: a.tol,
        exhaustive_limit: a.exhaustive_limit,
        execution: if a.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
    };
    let spec = || -> smc::Result<StructureSpec> { io::read_json(require(a.spec.as_ref(), "spec")?) };
    let result = match a.method {
        MethodArg::Exact => estimators::exact_least_squares(&obs, &spec()?, &cfg)?,
        MethodArg::Bcd => estimators::block_coordinate_ls(&obs, &spec()?, &cfg, a.seed)?,
        MethodArg::LeastSquares => estimators::least_squares(&obs, &spec()?, &cfg, a.seed)?,
        MethodArg::Svt => estimators::hard_threshold(&obs, require(a.lambda, "lambda")?)?,
        MethodArg::Adaptive => {
            let spec = spec()?;
            let lambda = a
                .lambda
                .unwrap_or_else(|| rates::default_adaptive_lambda(obs.sigma(), spec.theta_mx));
            estimators::adaptive_penalized(&obs, &spec, lambda, &cfg, a.seed)?
        }
    };
    emit(a.out.as_deref(), &result)
}

fn rates_cmd(a: RatesArgs) -> smc::Result<()> {
    let spec: StructureSpec = io::read_json(&a.spec)?;
    let report = rates::rate_report(&spec, a.sigma, a.p, a.c_frob, a.c_spec)?;
    let lower = rates::lower_values(&spec, a.sigma, a.p, a.c_frob, a.c_spec)?;
    let mut out = json!({
        "rates": report,
        "lower": lower,
        "penalty": if spec.s_n >= 1 && spec.s_m >= 1 { Some(rates::penalty(spec.s_n, spec.s_m, &spec)?) } else { None },
    });
    if let Some(u) = a.u {
        if let Some(eps) = a.epsilon {
            out["covering"] = serde_json::to_value(rates::covering_bounds(&spec, u, eps)?)?;
        }
        let surrogate = rates::covering_surrogate(&spec, u)?;
        out["critical_radius"] = serde_json::to_value(rates::critical_radius(spec.n * spec.m, surrogate)?)?;
    }
    emit(a.out.as_deref(), &out)
}

fn packing_cmd(a: PackingArgs) -> smc::Result<()> {
    match a.kind {
        PackingKind::Tz | PackingKind::Tb => {
            let spec: StructureSpec = io::read_json(require(a.spec.as_ref(), "spec")?)?;
            let set = if matches!(a.kind, PackingKind::Tz) {
                packing::build_t_z(&spec, a.sigma, a.p, a.c0, a.seed, a.cap)?
            } else {
                packing::build_t_b(&spec, a.sigma, a.p, a.c0, a.seed, a.cap)?
            };
            emit(a.out.as_deref(), &set)
        }
        PackingKind::Code => {
            let code =
                packing::sparse_binary_packing(require(a.k, "k")?, require(a.s, "s")?, DEFAULT_CONSTANTS, a.seed)?;
            emit(a.out.as_deref(), &json!({ "packing": code, "seed": a.seed }))
        }
        PackingKind::Embed => {
            let code =
                packing::sparse_binary_packing(require(a.k, "k")?, require(a.s, "s")?, DEFAULT_CONSTANTS, a.seed)?;
            let q = packing::sign_embedding(require(a.r, "r")?, &code.codewords, a.seed, a.max_resamples)?;
            emit(
                a.out.as_deref(),
                &json!({ "vectors": code.codewords, "q": MatrixFile::from(&q.as_f64()), "attempts": q.attempts,
                         "min_ratio": q.min_ratio, "max_ratio": q.max_ratio, "seed": a.seed }),
            )
        }
    }
}

fn bench_cmd(a: BenchArgs) -> smc::Result<()> {
    let mut cfg: BenchConfig = io::read_json(&a.config)?;
    if a.out.is_some() {
        cfg.out = a.out;
    }
    cfg.timing |= a.timing;
    let out = cfg.out.take();
    let rows = bench::run_experiment(&cfg)?;
    match &out {
        Some(path) => bench::write_csv(path, &rows)?,
        None => bench::write_csv_to(std::io::stdout().lock(), &rows)?,
    }
    if let Some(path) = &a.summary {
        match bench::summarize(&rows) {
            Ok(s) => io::write_json(path, &s)?,
            Err(e) => {
                log::warn!("{e}");
                fs::write(path, "null\n")?;
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Budget(_) | Error::Refused(_) => 3,
        Error::Construction(_) | Error::Degenerate(_) | Error::EmptySummary(_) | Error::Contract(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Observe(a) => observe(a),
        Command::Estimate(a) => estimate(a),
        Command::Rates(a) => rates_cmd(a),
        Command::Packing(a) => packing_cmd(a),
        Command::Bench(a) => bench_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
