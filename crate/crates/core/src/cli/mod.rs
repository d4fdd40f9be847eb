//! Command-line surface: `simulate`, `fit`, `select-q`, `evaluate` and
//! `benchmark`.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or I/O error, 4 the fit hit
//! `--max-iter` without converging.

pub mod benchmark;
pub mod io;
pub mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::data::{validate, Dataset, FitConfig, MixedDataMatrix, VariableKind};
use crate::error::Error;
use crate::fit::fit;
use crate::metrics::{trace_statistic, trace_statistic_upsilon};
use crate::selectq::{select_num_factors, DEFAULT_Q_MAX};
use crate::simulate::{generate_dataset, NoiseKind, SimSpec, TypeBlock};

pub use benchmark::Scenario;
pub use manifest::RunManifest;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "overgfm",
    version,
    about = "Overdispersed generalized factor model"
)]
pub struct Cli {
    /// Worker threads for intra-fit parallelism.
    #[arg(long, global = true, env = "OVERGFM_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known factors.
    Simulate(SimulateArgs),
    /// Fit the model to a dataset.
    Fit(FitArgs),
    /// Choose the number of factors by singular-value ratio.
    SelectQ(SelectQArgs),
    /// Compare estimated and true factors or loadings.
    Evaluate(EvaluateArgs),
    /// Run a replicated simulation study.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Number of columns; implied by `--types` when that lists counts.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, default_value_t = 6)]
    pub q: usize,
    /// `thirds`, or a list such as `continuous:100,count:100,binomial:100`.
    #[arg(long, default_value = "thirds")]
    pub types: String,
    /// Signal strength per type block, comma separated.
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub sigma2: f64,
    /// `gaussian` or `t:<df>`.
    #[arg(long, default_value = "gaussian")]
    pub noise: String,
    #[arg(long, default_value_t = 0.4)]
    pub mu_scale: f64,
    /// Trials for binomial columns.
    #[arg(long, default_value_t = 1)]
    pub trials: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub offsets: Option<PathBuf>,
    #[arg(long)]
    pub q: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub eps_elbo: f64,
    /// Seed for the optional random restarts.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
    /// Take every Laplace-Taylor site update even when it lowers the ELBO.
    #[arg(long)]
    pub unguarded: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectQArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub offsets: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_Q_MAX)]
    pub q_max: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub eps_elbo: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub est_h: Option<PathBuf>,
    #[arg(long)]
    pub true_h: Option<PathBuf>,
    #[arg(long)]
    pub est_b: Option<PathBuf>,
    #[arg(long)]
    pub est_mu: Option<PathBuf>,
    #[arg(long)]
    pub true_b: Option<PathBuf>,
    #[arg(long)]
    pub true_mu: Option<PathBuf>,
    /// Output directory; the report is also printed to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchmarkArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure of a command, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(msg) => CliError::Usage(msg),
            other => CliError::Data(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// What a successful command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub manifest: RunManifest,
    /// False only for a fit that ran out of iterations.
    pub converged: bool,
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn parse_types(spec: &str, p: Option<usize>, trials: u32) -> CliResult<Vec<(VariableKind, usize)>> {
    let binomial = VariableKind::Binomial { trials };
    if spec.eq_ignore_ascii_case("thirds") {
        let p = p.ok_or_else(|| CliError::Usage("--p is required with --types thirds".into()))?;
        let third = p / 3;
        return Ok(vec![
            (VariableKind::Continuous, third),
            (VariableKind::Count, third),
            (binomial, p - 2 * third),
        ]);
    }
    let mut blocks = Vec::new();
    for part in spec.split(',') {
        let (name, count) = part
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("type block '{part}' is not kind:count")))?;
        let kind = match name.trim().to_ascii_lowercase().as_str() {
            "continuous" | "normal" | "gaussian" => VariableKind::Continuous,
            "count" | "poisson" => VariableKind::Count,
            "binomial" | "binary" => binomial,
            other => return Err(CliError::Usage(format!("unknown variable kind '{other}'"))),
        };
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad column count in '{part}'")))?;
        blocks.push((kind, count));
    }
    let total: usize = blocks.iter().map(|b| b.1).sum();
    if let Some(p) = p {
        if p != total {
            return Err(CliError::Usage(format!(
                "--types lists {total} columns but --p is {p}"
            )));
        }
    }
    Ok(blocks)
}

fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("not a number: '{v}'")))
        })
        .collect()
}

fn parse_noise(s: &str) -> CliResult<NoiseKind> {
    if s.eq_ignore_ascii_case("gaussian") {
        return Ok(NoiseKind::Gaussian);
    }
    if let Some(df) = s.strip_prefix("t:") {
        let df: f64 = df
            .parse()
            .map_err(|_| CliError::Usage(format!("bad t degrees of freedom '{df}'")))?;
        return Ok(NoiseKind::StudentT { df });
    }
    Err(CliError::Usage(format!(
        "unknown noise '{s}'; use gaussian or t:<df>"
    )))
}

/// Translate simulate flags into a generator specification.
pub fn sim_spec(args: &SimulateArgs) -> CliResult<SimSpec> {
    let kinds = parse_types(&args.types, args.p, args.trials)?;
    let rho = match &args.rho {
        Some(list) => parse_list(list)?,
        None if args.types.eq_ignore_ascii_case("thirds") => vec![0.05, 0.2, 0.1],
        None => {
            return Err(CliError::Usage(
                "--rho is required with explicit --types".into(),
            ))
        }
    };
    if rho.len() != kinds.len() {
        return Err(CliError::Usage(format!(
            "{} signal strengths for {} type blocks",
            rho.len(),
            kinds.len()
        )));
    }
    Ok(SimSpec {
        n: args.n,
        q: args.q,
        blocks: kinds
            .into_iter()
            .zip(rho)
            .map(|((kind, count), rho)| TypeBlock { kind, count, rho })
            .collect(),
        sigma2: args.sigma2,
        noise: parse_noise(&args.noise)?,
        mu_scale: args.mu_scale,
        seed: args.seed,
    })
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<Outcome> {
    let start = Instant::now();
    let spec = sim_spec(args)?;
    let sim = generate_dataset(&spec)?;
    let out = &args.out;
    let q = spec.q;
    let mut manifest = RunManifest::new(
        "simulate",
        json!({ "args": to_json(args), "spec": to_json(&spec) }),
        Some(args.seed),
    );
    io::write_data(
        &out.join("data.csv"),
        sim.dataset.data(),
        sim.dataset.schema(),
    )?;
    io::write_schema(&out.join("schema.csv"), sim.dataset.schema())?;
    io::write_matrix(&out.join("H0.csv"), &io::factor_header(q), &sim.h0)?;
    io::write_matrix(&out.join("B0.csv"), &io::factor_header(q), &sim.b0)?;
    io::write_vector(&out.join("mu0.csv"), "mu", &sim.mu0)?;
    manifest.outputs = ["data.csv", "schema.csv", "H0.csv", "B0.csv", "mu0.csv"]
        .iter()
        .map(|f| out.join(f))
        .collect();
    manifest.duration_seconds = start.elapsed().as_secs_f64();
    manifest.write(&out.join("manifest.json"))?;
    Ok(Outcome {
        manifest,
        converged: true,
    })
}

fn load_dataset(data: &Path, schema: &Path, offsets: Option<&Path>) -> CliResult<Dataset> {
    let schema = io::read_schema(schema)?;
    let x = io::read_data(data, &schema)?;
    let matrix = match offsets {
        Some(path) => MixedDataMatrix::with_offsets(x, io::read_offsets(path)?),
        None => MixedDataMatrix::new(x),
    };
    validate(matrix, schema).map_err(CliError::Data)
}

fn inputs(paths: &[Option<&PathBuf>]) -> Vec<PathBuf> {
    paths.iter().flatten().map(|p| (*p).clone()).collect()
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<Outcome> {
    let start = Instant::now();
    let ds = load_dataset(&args.data, &args.schema, args.offsets.as_deref())?;
    let mut config = FitConfig::new(args.q);
    config.max_iter = args.max_iter;
    config.eps_elbo = args.eps_elbo;
    config.seed = args.seed;
    config.restarts = args.restarts;
    config.guard_estep = !args.unguarded;
    if config.restarts > 0 && config.seed.is_none() {
        return Err(CliError::Usage("--restarts needs --seed".into()));
    }
    config.check(ds.n(), ds.p())?;
    let res = fit(&ds, &config)?;

    let out = &args.out;
    let header = io::factor_header(args.q);
    io::write_matrix(&out.join("H.csv"), &header, &res.params.factors)?;
    io::write_matrix(&out.join("B.csv"), &header, &res.params.loadings)?;
    io::write_vector(&out.join("mu.csv"), "mu", &res.params.intercepts)?;
    io::write_vector(&out.join("lambda.csv"), "lambda", &res.params.variances)?;
    let mut trace = String::from("iteration,elbo\n");
    for (t, v) in res.elbo_trace.iter().enumerate() {
        trace.push_str(&format!("{t},{}\n", io::format_f64(*v)));
    }
    io::write_atomic(&out.join("elbo_trace.csv"), trace.as_bytes())?;
    let summary = json!({
        "iterations": res.iterations,
        "converged": res.converged,
        "overflow_events": res.overflow_events,
        "final_elbo": res.elbo_trace.last(),
    });
    io::write_atomic(
        &out.join("fit_summary.json"),
        serde_json::to_string_pretty(&summary)
            .map_err(Error::from)?
            .as_bytes(),
    )?;

    let mut manifest = RunManifest::new(
        "fit",
        json!({ "args": to_json(args), "config": to_json(&config) }),
        args.seed,
    );
    manifest.inputs = inputs(&[Some(&args.data), Some(&args.schema), args.offsets.as_ref()]);
    manifest.outputs = [
        "H.csv",
        "B.csv",
        "mu.csv",
        "lambda.csv",
        "elbo_trace.csv",
        "fit_summary.json",
    ]
    .iter()
    .map(|f| out.join(f))
    .collect();
    manifest.duration_seconds = start.elapsed().as_secs_f64();
    manifest.write(&out.join("manifest.json"))?;
    Ok(Outcome {
        manifest,
        converged: res.converged,
    })
}

pub fn cmd_select_q(args: &SelectQArgs) -> CliResult<Outcome> {
    let start = Instant::now();
    let ds = load_dataset(&args.data, &args.schema, args.offsets.as_deref())?;
    let mut config = FitConfig::new(args.q_max);
    config.max_iter = args.max_iter;
    config.eps_elbo = args.eps_elbo;
    if args.q_max < 2 {
        return Err(CliError::Usage("--q-max must be at least 2".into()));
    }
    config.check(ds.n(), ds.p())?;
    let report = select_num_factors(&ds, args.q_max, &config)?;

    let out = &args.out;
    let mut table = String::from("k,singular_value,ratio\n");
    for (k, sv) in report.singular_values.iter().enumerate() {
        let ratio = report
            .ratios
            .get(k)
            .map(|r| r.map(io::format_f64).unwrap_or_else(|| "NA".into()))
            .unwrap_or_default();
        table.push_str(&format!("{},{},{}\n", k + 1, io::format_f64(*sv), ratio));
    }
    io::write_atomic(&out.join("svr.csv"), table.as_bytes())?;
    io::write_atomic(
        &out.join("svr.json"),
        serde_json::to_string_pretty(&report)
            .map_err(Error::from)?
            .as_bytes(),
    )?;
    println!("q_hat = {}", report.q_hat);

    let mut manifest = RunManifest::new("select-q", json!({ "args": to_json(args) }), None);
    manifest.inputs = inputs(&[Some(&args.data), Some(&args.schema), args.offsets.as_ref()]);
    manifest.outputs = vec![out.join("svr.csv"), out.join("svr.json")];
    manifest.duration_seconds = start.elapsed().as_secs_f64();
    manifest.write(&out.join("manifest.json"))?;
    Ok(Outcome {
        manifest,
        converged: true,
    })
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<Outcome> {
    let start = Instant::now();
    let mut rows = Vec::new();
    match (&args.est_h, &args.true_h) {
        (Some(e), Some(t)) => {
            let v = trace_statistic(&io::read_matrix(e)?, &io::read_matrix(t)?)?;
            rows.push(("Tr_H", v));
        }
        (None, None) => {}
        _ => return Err(CliError::Usage("--est-h and --true-h go together".into())),
    }
    let gamma = [&args.est_b, &args.est_mu, &args.true_b, &args.true_mu];
    if gamma.iter().all(|p| p.is_some()) {
        let v = trace_statistic_upsilon(
            &io::read_matrix(args.est_b.as_ref().unwrap())?,
            &io::read_vector(args.est_mu.as_ref().unwrap())?,
            &io::read_matrix(args.true_b.as_ref().unwrap())?,
            &io::read_vector(args.true_mu.as_ref().unwrap())?,
        )?;
        rows.push(("Tr_Gamma", v));
    } else if gamma.iter().any(|p| p.is_some()) {
        return Err(CliError::Usage(
            "--est-b, --est-mu, --true-b and --true-mu go together".into(),
        ));
    }
    if rows.is_empty() {
        return Err(CliError::Usage("nothing to evaluate".into()));
    }
    let mut report = String::from("metric,value\n");
    for (name, v) in &rows {
        report.push_str(&format!("{name},{}\n", io::format_f64(*v)));
    }
    print!("{report}");

    let mut manifest = RunManifest::new("evaluate", json!({ "args": to_json(args) }), None);
    manifest.inputs = inputs(&[
        args.est_h.as_ref(),
        args.true_h.as_ref(),
        args.est_b.as_ref(),
        args.est_mu.as_ref(),
        args.true_b.as_ref(),
        args.true_mu.as_ref(),
    ]);
    if let Some(out) = &args.out {
        io::write_atomic(&out.join("evaluation.csv"), report.as_bytes())?;
        manifest.outputs = vec![out.join("evaluation.csv")];
        manifest.duration_seconds = start.elapsed().as_secs_f64();
        manifest.write(&out.join("manifest.json"))?;
    }
    Ok(Outcome {
        manifest,
        converged: true,
    })
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> CliResult<Outcome> {
    let start = Instant::now();
    if args.replicates == 0 {
        return Err(CliError::Usage("--replicates must be positive".into()));
    }
    let outputs = benchmark::run(args.scenario, args.replicates, args.seed, &args.out)?;
    let mut manifest = RunManifest::new(
        "benchmark",
        json!({ "args": to_json(args) }),
        Some(args.seed),
    );
    manifest.outputs = outputs;
    manifest.duration_seconds = start.elapsed().as_secs_f64();
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(Outcome {
        manifest,
        converged: true,
    })
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    let work = || match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::SelectQ(a) => cmd_select_q(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    };
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            pool.install(work)
        }
        None => work(),
    }
}

/// Parse arguments, run, and map the result to a process exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(&cli) {
        Ok(o) if o.converged => ExitCode::from(EXIT_OK),
        Ok(_) => {
            eprintln!("warning: maximum iterations reached before convergence");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
