//! Command-line harness for the ragged-attention library: equivalence
//! checks, kernel/pipeline sweeps, overhead analysis, and fixture
//! generation.
//!
//! Exit codes: 0 success, 1 tolerance violation, 2 usage or config error,
//! 3 I/O error.

use clap::{Parser, Subcommand};

mod cmd_analyze;
mod cmd_bench;
mod cmd_check;
mod cmd_fixtures;
mod run_config;

#[derive(Parser, Debug)]
#[command(
    name = "raggedvit",
    version,
    about = "Ragged attention for token-pruned ViT inference: checks, sweeps, analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Numerical equivalence: ragged kernel vs oracle, padded vs ragged pipeline
    Check(cmd_check::CheckArgs),
    /// Kernel and pipeline latency sweeps; writes CSV/SVG artifacts
    Bench(cmd_bench::BenchArgs),
    /// Overhead decomposition of a results CSV (ours or transcribed data)
    Analyze(cmd_analyze::AnalyzeArgs),
    /// Write binary tensor fixtures for cross-implementation testing
    GenFixtures(cmd_fixtures::FixturesArgs),
}

fn exit_code_for(err: &raggedvit::Error) -> i32 {
    match err {
        raggedvit::Error::Io(_) => 3,
        _ => 2,
    }
}

fn main() {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Check(args) => cmd_check::run(args),
        Command::Bench(args) => cmd_bench::run(args),
        Command::Analyze(args) => cmd_analyze::run(args),
        Command::GenFixtures(args) => cmd_fixtures::run(args),
    };
    let code = match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    };
    std::process::exit(code);
}
