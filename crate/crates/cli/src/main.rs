use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use qudo_cli::{
    cmd_bench_scaling, cmd_compare, cmd_generate, cmd_waterfall_prob, parse_range, parse_tau_grid,
    records_csv, run_method, solve_report, waterfall_csv, Axis, GenerateSpec, Reference,
    ScalingSpec, TauChoice, UsageError, WaterfallProbSpec,
};
use qudo_core::{
    Capacity, Method, Problem, ProblemKind, SolveOptions, SolverConfig, TauGrid, WaterfallOptions,
};

/// Tensor-network solvers for QUBO, QUDO and tensor-QUDO problems.
#[derive(Parser)]
#[command(name = "qudo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random instance.
    Generate(GenerateArgs),
    /// Solve an instance with one method.
    Solve(SolveArgs),
    /// Solve with several methods and report errors against a reference.
    Compare(CompareArgs),
    /// Time methods over a sweep of n, d or k.
    BenchScaling(ScalingArgs),
    /// Average waterfall probability over nearest-neighbor instances per d.
    WaterfallProb(WaterfallArgs),
}

#[derive(Args)]
struct TauArgs {
    /// Imaginary time (default 50).
    #[arg(long)]
    tau: Option<f64>,
    /// Solve at every point of a geometric grid and keep the best.
    #[arg(long, value_name = "MIN,MAX,COUNT", value_parser = parse_tau_grid)]
    tau_grid: Option<TauGrid>,
}

#[derive(Args)]
struct ChainArgs {
    /// Chain width for matrix, tensor and waterfall; defaults to the bandwidth.
    #[arg(long)]
    k: Option<usize>,
    /// Waterfall restart tau multiplier; 1 disables restarts.
    #[arg(long, default_value_t = 1.0)]
    restart_factor: f64,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "qudo")]
    kind: ProblemKind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Couplings reach at most k positions.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw linear terms (qudo only).
    #[arg(long)]
    lin: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "matrix")]
    method: Method,
    #[command(flatten)]
    tau: TauArgs,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', default_value = "matrix,tensor,waterfall")]
    method: Vec<Method>,
    #[command(flatten)]
    tau: TauArgs,
    /// brute or best-of.
    #[arg(long, default_value = "brute")]
    reference: Reference,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingArgs {
    /// n, d or k.
    #[arg(long)]
    axis: Axis,
    /// `A,B,C` or `START:END[:STEP]`.
    #[arg(long)]
    range: String,
    #[arg(long, default_value = "qudo")]
    kind: ProblemKind,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, value_delimiter = ',', default_value = "matrix,tensor")]
    method: Vec<Method>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[command(flatten)]
    tau: TauArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    restart_factor: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct WaterfallArgs {
    /// Values of d, `A,B,C` or `START:END[:STEP]`.
    #[arg(long, default_value = "2:6")]
    d_range: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[command(flatten)]
    tau: TauArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    restart_factor: f64,
    /// Use instances without couplings.
    #[arg(long)]
    decoupled: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn base_config() -> Result<SolverConfig> {
    Ok(SolverConfig {
        caps: Capacity::from_env()?,
        ..SolverConfig::default()
    })
}

fn options(k: Option<usize>, restart_factor: f64) -> SolveOptions {
    SolveOptions {
        k,
        waterfall: WaterfallOptions { restart_factor },
    }
}

fn read_problem(path: &Path) -> Result<Problem> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Problem::from_json(&text)?)
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn instance_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().replace(',', "_"))
        .unwrap_or_else(|| "instance".into())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => {
            let text = cmd_generate(&GenerateSpec {
                kind: a.kind,
                n: a.n,
                d: a.d,
                k: a.k,
                seed: a.seed,
                lin: a.lin,
            })?;
            emit(a.output.as_deref(), &text)
        }
        Command::Solve(a) => {
            let p = read_problem(&a.input)?;
            let tau = TauChoice::from_flags(a.tau.tau, a.tau.tau_grid)?;
            let opts = options(a.chain.k, a.chain.restart_factor);
            let run = run_method(&p, a.method, &base_config()?, &tau, &opts)?;
            emit(
                a.output.as_deref(),
                &solve_report(&p, a.method, &tau, &run)?,
            )
        }
        Command::Compare(a) => {
            let p = read_problem(&a.input)?;
            let tau = TauChoice::from_flags(a.tau.tau, a.tau.tau_grid)?;
            let opts = options(a.chain.k, a.chain.restart_factor);
            let mut recs = cmd_compare(
                &p,
                &instance_name(&a.input),
                &a.method,
                &base_config()?,
                &tau,
                a.reference,
                &opts,
            )?;
            emit(a.output.as_deref(), &records_csv(&mut recs))
        }
        Command::BenchScaling(a) => {
            let spec = ScalingSpec {
                axis: a.axis,
                values: parse_range(&a.range)?,
                kind: a.kind,
                n: a.n,
                d: a.d,
                k: a.k,
                methods: a.method,
                repeats: a.repeats,
                tau: TauChoice::from_flags(a.tau.tau, a.tau.tau_grid)?,
                seed: a.seed,
            };
            let mut recs =
                cmd_bench_scaling(&spec, &base_config()?, &options(None, a.restart_factor))?;
            emit(a.output.as_deref(), &records_csv(&mut recs))
        }
        Command::WaterfallProb(a) => {
            let tau = match (a.tau.tau, a.tau.tau_grid) {
                (None, None) => TauChoice::Grid(TauGrid::default()),
                (t, g) => TauChoice::from_flags(t, g)?,
            };
            let spec = WaterfallProbSpec {
                d_values: parse_range(&a.d_range)?,
                n: a.n,
                instances: a.instances,
                tau,
                seed: a.seed,
                decoupled: a.decoupled,
            };
            let rows =
                cmd_waterfall_prob(&spec, &base_config()?, &options(None, a.restart_factor))?;
            emit(a.output.as_deref(), &waterfall_csv(&rows))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = if let Some(e) = e.downcast_ref::<qudo_core::Error>() {
                (e.kind_tag(), 1)
            } else if e.is::<UsageError>() {
                ("usage", 2)
            } else {
                ("io", 1)
            };
            eprintln!("error kind={kind}: {e:#}");
            ExitCode::from(code)
        }
    }
}
