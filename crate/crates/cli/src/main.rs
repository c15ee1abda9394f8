//! `privdude` command-line harness: generate instances, solve them with any
//! algorithm variant, and sweep the privacy budget.
//!
//! Exit codes: 0 success, 1 usage or precondition, 2 I/O, 3 failed internal
//! check. Set `PRIVDUDE_THREADS` to bound the worker pool; outputs do not
//! depend on it.

mod commands;
mod error;
mod outcome;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;
use crate::outcome::Algo;
use privdude::problems::ProblemKind;

#[derive(Debug, Parser)]
#[command(name = "privdude", version, about = "Private dual decomposition solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded instance file.
    Generate(GenerateArgs),
    /// Solve an instance file and write a report.
    Solve(SolveArgs),
    /// Solve repeatedly across privacy budgets and write CSV rows.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// knapsack, ddemand, flow, schedule or shared.
    #[arg(long)]
    kind: String,
    /// Number of agents.
    #[arg(long)]
    n: usize,
    /// Constraints, goods, layers, intervals or resources, by kind.
    #[arg(long)]
    k: usize,
    /// Bundle cap, per-interval demand cap, or projects' resource count.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Layer width, slots, or number of projects.
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "out-path", visible_alias = "out")]
    out_path: PathBuf,
}

#[derive(Debug, Args)]
struct BudgetArgs {
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    /// Satisfaction slack for the price-based mechanisms.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of rounds, replacing the derived horizon.
    #[arg(long = "t-override", visible_alias = "T")]
    t_override: Option<u64>,
    /// Publish exact gradients (no privacy).
    #[arg(long = "no-noise")]
    no_noise: bool,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long = "in-path", visible_alias = "in")]
    in_path: PathBuf,
    #[arg(long, value_enum, default_value_t = Algo::Privdude)]
    algo: Algo,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long = "out-path", visible_alias = "out")]
    out_path: PathBuf,
    /// Record wall time in the report (makes it run-dependent).
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long = "in-path", visible_alias = "in")]
    in_path: PathBuf,
    #[arg(long, value_enum, default_value_t = Algo::Privdude)]
    algo: Algo,
    /// Comma-separated privacy budgets.
    #[arg(long)]
    epsilons: String,
    #[arg(long, default_value_t = 1)]
    trials: u64,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long = "out-csv", visible_alias = "out")]
    out_csv: PathBuf,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("PRIVDUDE_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("PRIVDUDE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Generate(a) => {
            let kind: ProblemKind =
                a.kind.parse().map_err(|e: privdude::problems::UnknownKind| CliError::Usage(e.to_string()))?;
            commands::generate(kind, a.n, a.k, a.d, a.m, a.seed, &a.out_path)
        }
        Command::Solve(a) => commands::solve(&commands::SolveRequest {
            in_path: &a.in_path,
            algo: a.algo,
            epsilon: a.epsilon,
            delta: a.budget.delta,
            beta: a.budget.beta,
            alpha: a.budget.alpha,
            seed: a.budget.seed,
            t_override: a.budget.t_override,
            no_noise: a.budget.no_noise,
            out_path: &a.out_path,
            timings: a.timings,
        }),
        Command::Sweep(a) => {
            let epsilons = commands::parse_epsilons(&a.epsilons)?;
            commands::sweep(&commands::SweepRequest {
                in_path: &a.in_path,
                algo: a.algo,
                epsilons,
                trials: a.trials,
                delta: a.budget.delta,
                beta: a.budget.beta,
                alpha: a.budget.alpha,
                seed: a.budget.seed,
                t_override: a.budget.t_override,
                no_noise: a.budget.no_noise,
                out_csv: &a.out_csv,
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
