mod commands;
mod config;
mod error;
mod output;

use clap::{Parser, Subcommand};

use commands::*;
use error::CliError;

#[derive(Parser)]
#[command(name = "lpq", version, about = "Group sparse least squares with l_{p,q} regularization", arg_required_else_help = true)]
struct Cli {
    /// JSON object (inline or a file path) merged under the flags
    #[arg(long, global = true)]
    config: Option<String>,
    /// Worker threads for experiment drivers
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the proximal operator on one group
    ProxEval(ProxEvalArgs),
    /// Run the proximal gradient solver
    Solve(SolveArgs),
    /// Recovery rates per penalty on random instances
    BenchRecovery(BenchArgs),
    /// Recovery rates across group sizes
    SweepGroupsize(SweepGroupsizeArgs),
    /// Recovery rates across exponents q
    SweepQ(SweepQArgs),
    /// Sampled upper bound on the group restricted eigenvalue constant
    GrecEstimate(GrecArgs),
    /// Global or local recovery bound
    Bounds(BoundsArgs),
    /// Recovery error of the global minimiser on the 2x3 example
    Figure1(Figure1Args),
    /// Solution-path scores for several right-hand sides
    PathScores(PathScoresArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot size the thread pool: {e}")))?;
    }
    let cfg = config::load(cli.config.as_deref())?;
    match cli.command {
        Command::ProxEval(a) => prox_eval(config::merge(&a, cfg)?),
        Command::Solve(a) => solve(config::merge(&a, cfg)?),
        Command::BenchRecovery(a) => bench_recovery(config::merge(&a, cfg)?),
        Command::SweepGroupsize(a) => sweep_groupsize(config::merge(&a, cfg)?),
        Command::SweepQ(a) => sweep_q(config::merge(&a, cfg)?),
        Command::GrecEstimate(a) => grec_estimate(config::merge(&a, cfg)?),
        Command::Bounds(a) => bounds(config::merge(&a, cfg)?),
        Command::Figure1(a) => figure1(config::merge(&a, cfg)?),
        Command::PathScores(a) => path_scores(config::merge(&a, cfg)?),
    }
}

fn main() {
    // Help and version exit 0; usage errors and empty arguments exit 2.
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    if let Err(e) = run(cli) {
        eprintln!("lpq: {e}");
        std::process::exit(e.exit_code());
    }
}
