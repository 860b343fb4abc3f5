use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pooltest_core::Error;

mod artifacts;
mod commands;

#[derive(Parser, Debug)]
#[command(
    name = "pooltest",
    version,
    about = "Pooled testing with repeated negative pool tests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form metrics for one procedure.
    Evaluate {
        #[command(flatten)]
        procedure: ProcedureArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Also write evaluate.csv and run.toml here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo run of one procedure.
    Simulate {
        #[command(flatten)]
        procedure: ProcedureArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate every (n, r) and mark the non-dominated settings.
    Sweep {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fit alpha and beta to measured pool sensitivities.
    Fit {
        /// CSV with columns n,k,se. Defaults to the built-in reconstructed points.
        #[arg(long)]
        fit_data: Option<PathBuf>,
        #[arg(long, default_value_t = 0.99)]
        se_i: f64,
        #[arg(long, default_value_t = 0.99)]
        sp: f64,
        #[arg(long, value_enum, default_value_t = Orientation::KOverN)]
        ratio_orientation: Orientation,
        #[arg(long, value_enum, default_value_t = Linear::PoolSize)]
        linear_term: Linear,
        /// Objective evaluation budget across all restarts.
        #[arg(long, default_value_t = 100_000)]
        max_iterations: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare simulation with the closed forms on a fixed configuration set.
    Verify {
        /// Prevalences to verify at.
        #[arg(long, num_args = 0.., value_delimiter = ',')]
        p: Option<Vec<f64>>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Minimum-tests and false-positive summary tables.
    Tables {
        /// Build the tables from a grid.csv written by `sweep` instead of sweeping.
        #[arg(long, conflicts_with_all = ["p", "n_max", "r_max", "alpha", "beta", "se_i", "sp", "fit_data"])]
        from: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct ProcedureArgs {
    #[arg(long, value_enum, default_value_t = Kind::Modified)]
    kind: Kind,
    /// Pool size; ignored for individual testing.
    #[arg(long)]
    n: Option<u32>,
    /// Total pool tests allowed for a negative pool (1 for Dorfman).
    #[arg(long)]
    r: Option<u32>,
    /// Prevalence; several values may be given.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    p: Vec<f64>,
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Prevalences to sweep; `--p` with no values gives an empty sweep.
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long, default_value_t = 50)]
    n_max: u32,
    #[arg(long, default_value_t = 5)]
    r_max: u32,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, conflicts_with = "fit_data")]
    alpha: Option<f64>,
    #[arg(long, conflicts_with = "fit_data")]
    beta: Option<f64>,
    #[arg(long, default_value_t = 0.99)]
    se_i: f64,
    #[arg(long, default_value_t = 0.99)]
    sp: f64,
    /// Fit alpha and beta to this n,k,se CSV first.
    #[arg(long)]
    fit_data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Orientation::KOverN)]
    ratio_orientation: Orientation,
    /// Variable multiplying beta.
    #[arg(long, value_enum, default_value_t = Linear::PoolSize)]
    linear_term: Linear,
}

#[derive(Args, Debug, Clone)]
struct SimArgs {
    #[arg(long, default_value_t = 10_000_000)]
    subjects: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Kind {
    Individual,
    Dorfman,
    Modified,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Orientation {
    KOverN,
    NOverK,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Linear {
    PoolSize,
    PositiveCount,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonConvergence { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            eprintln!("{}", rendered.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(1);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
