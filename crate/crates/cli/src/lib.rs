//! `arblab` command-line interface.
//!
//! Results go to stdout as JSON, diagnostics to stderr, bulk data to CSV
//! files. Exit codes: 0 success, 2 invalid input, 3 numerical failure,
//! 4 I/O failure.

mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use arblab::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

const PRECEDENCE: &str = "Settings are resolved as: command-line flag, then the --config file, \
then built-in defaults. The seed additionally falls back to ARBLAB_SEED before the default.";

#[derive(Debug, Parser)]
#[command(name = "arblab", version, about = "Optimal relative arbitrage toolkit", after_help = PRECEDENCE)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for path simulation (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Model name: bessel3, volstab, or a constant-coefficient model given by --model-config.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// JSON model description (name, n, zeta, b, sigma, H_linear).
    #[arg(long, global = true)]
    pub model_config: Option<PathBuf>,
    #[arg(long = "n", global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub zeta: Option<f64>,
    /// Initial capitalisations, comma separated (default: all ones).
    #[arg(
        long,
        global = true,
        value_delimiter = ',',
        allow_negative_numbers = true
    )]
    pub x0: Option<Vec<f64>>,
    /// Horizon.
    #[arg(long = "T", global = true)]
    pub horizon: Option<f64>,
    /// Time step; overrides --steps-per-unit.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub steps_per_unit: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Absorption threshold (default: 1e-4 times the smallest x0 coordinate).
    #[arg(long, global = true)]
    pub hit_epsilon: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print model coefficients, auxiliary drift and deflator terms at a point.
    Inspect(InspectArgs),
    /// Simulate market, auxiliary or weight paths.
    Simulate(SimulateArgs),
    /// Estimate U(T, x0) by Monte Carlo.
    EstimateU(EstimateArgs),
    /// Solve for U on a truncated orthant, or for Q on the two-asset simplex.
    SolvePde(SolveArgs),
    /// Evaluate strategy weights at a point.
    Strategy(StrategyArgs),
    /// Backtest a strategy against the market portfolio.
    Backtest(BacktestArgs),
    /// Fichera drifts on the face {x_i = 0}.
    Fichera(FicheraArgs),
    /// Sampled sufficient conditions for relative arbitrage.
    Conditions(ConditionsArgs),
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Evaluation point (default: x0).
    #[arg(long, value_delimiter = ',')]
    pub at: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProcessArg {
    Market,
    Auxiliary,
    Weights,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Euler,
    FullTruncationEuler,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub process: Option<ProcessArg>,
    #[arg(long)]
    pub paths: Option<usize>,
    /// Record every k-th step.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Write paths to this CSV file (gzip when it ends in .gz).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Exit,
    Deflated,
    Deflator,
    All,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub paths: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub lower: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub upper: Option<Vec<f64>>,
    #[arg(long)]
    pub d_tau: Option<f64>,
    #[arg(long, value_enum)]
    pub spacing: Option<SpacingArg>,
    #[arg(long)]
    pub slices: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpacingArg {
    Uniform,
    Sqrt,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Solve the two-asset weight equation for Q instead of U.
    #[arg(long)]
    pub weights: bool,
    /// Distance of the weight grid from the simplex vertices.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Threshold of the all-horizons diagnostic.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Export the solution as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Load a previously exported solution instead of solving.
    #[arg(long)]
    pub load: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyKind {
    Optimal,
    Generated,
    Market,
    Entropy,
    EwBlend,
    Diversity,
    Cash,
}

#[derive(Debug, Args)]
pub struct StrategyParams {
    /// Parameter c of the entropy and equal-weight blend portfolios.
    #[arg(long)]
    pub c: Option<f64>,
    /// Exponent of the diversity-weighted portfolio.
    #[arg(long)]
    pub p: Option<f64>,
    /// Load the U (optimal) or Q (generated) solution instead of solving.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct StrategyArgs {
    #[arg(long, value_enum)]
    pub kind: Option<StrategyKind>,
    #[command(flatten)]
    pub params: StrategyParams,
    /// State at which to evaluate (default: x0).
    #[arg(long, value_delimiter = ',')]
    pub at: Option<Vec<f64>>,
    /// Remaining horizon (default: T).
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyKind>,
    #[command(flatten)]
    pub params: StrategyParams,
    /// Initial wealth (default: U(T, x0) times total capitalisation for the optimal strategy, else the total capitalisation).
    #[arg(long)]
    pub v0: Option<f64>,
    #[arg(long)]
    pub paths: Option<usize>,
    /// Rebalance every k-th simulation step.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub report_points: Option<usize>,
    /// Check the replication identity against the solved U.
    #[arg(long)]
    pub replicate: bool,
    /// Write per-path wealth series to CSV.
    #[arg(long)]
    pub paths_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FicheraArgs {
    /// Face index, 1-based.
    #[arg(long)]
    pub face: usize,
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lo: f64,
    #[arg(long, default_value_t = 20.0)]
    pub hi: f64,
}

#[derive(Debug, Args)]
pub struct ConditionsArgs {
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lo: f64,
    #[arg(long, default_value_t = 20.0)]
    pub hi: f64,
}

/// Maps a library error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_io() {
        EXIT_IO
    } else if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_VALIDATION
    }
}

/// Runs the CLI on `argv` (including the program name), writing JSON to
/// `out` and log lines to `err`.
pub fn run_with_io(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    let env_seed = std::env::var(config::SEED_ENV).ok();
    let started = Instant::now();
    match commands::dispatch(&cli, env_seed.as_deref(), err) {
        Ok(value) => {
            let mut text =
                serde_json::to_string_pretty(&value).expect("JSON values always serialise");
            text.push('\n');
            if let Err(e) = out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                let _ = writeln!(err, "arblab: cannot write output: {e}");
                return EXIT_IO;
            }
            let _ = writeln!(
                err,
                "arblab: finished in {:.3}s",
                started.elapsed().as_secs_f64()
            );
            EXIT_OK
        }
        Err(e) => {
            let code = exit_code(&e);
            let _ = writeln!(err, "arblab: error: {e}");
            code
        }
    }
}

/// Entry point used by the binary.
pub fn run(argv: &[String]) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with_io(argv, &mut stdout.lock(), &mut stderr.lock())
}
