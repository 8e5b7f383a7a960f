//! Command-line entry point: `periodic-fpe <subcommand>`.
//!
//! Exit codes: 0 on success, 1 on a domain error (JSON on stderr), 2 on a
//! configuration or usage error.

mod commands;
pub mod config;
pub mod manifest;
mod selftest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

pub use config::{load_config, parse_config, ConfigError, FpConfig, Loaded, SdeConfig, SemilinearConfig};
pub use manifest::{RunManifest, sha256_hex, version};

pub const THREADS_ENV: &str = "PERIODIC_FPE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "periodic-fpe", version = concat!("v", env!("CARGO_PKG_VERSION")))]
#[command(about = "Periodicity in distribution: Markov chains, reflected SDEs, periodic Fokker-Planck equations")]
pub struct Cli {
    /// Print every error as one JSON object on stderr.
    #[arg(long, global = true)]
    pub json_errors: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BcArg {
    Dirichlet,
    Reflecting,
    Robin,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smallest N with P^N x0 = x0.
    MarkovCheck {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        init: PathBuf,
        #[arg(long, default_value_t = 64)]
        nmax: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Rows of the CSV sum to one (default: columns).
        #[arg(long)]
        row_stochastic: bool,
        /// Output directory; prints the report to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bounded-Lipschitz distance between two weighted point clouds.
    Dbl {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Euler-Maruyama paths with projection onto a box.
    SimulateSde {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time-periodic Fokker-Planck initial value problem.
    FpSolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma separated snapshot times.
        #[arg(long, value_delimiter = ',')]
        snapshots: Vec<f64>,
    },
    /// Spectral radius of the period map and the principal eigenvalue.
    Eigen {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the boundary condition of the config.
        #[arg(long, value_enum)]
        bc: Option<BcArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form stationary density and the stationarity residual.
    Stationary {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Periodic solution of a semilinear problem by monotone iteration.
    Semilinear {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the built-in example checks of every module.
    Selftest,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Domain { kind: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Domain { .. } => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Config(e) => json!({
                "error": "config",
                "path": e.path,
                "message": e.message,
                "exit_code": 2,
            }),
            CliError::Domain { kind, message } => json!({
                "error": kind,
                "message": message,
                "exit_code": 1,
            }),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Domain { kind, message } => write!(f, "{kind} error: {message}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

macro_rules! domain_error {
    ($($ty:path => $kind:literal),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Domain { kind: $kind, message: e.to_string() }
            }
        })*
    };
}

domain_error! {
    crate::markov::MarkovError => "markov",
    crate::bl_metric::BlError => "dbl",
    crate::sde::SdeError => "sde",
    crate::fpe::FpeError => "fpe",
    crate::period_map::PeriodMapError => "period_map",
    crate::semilinear::SemilinearError => "semilinear",
    crate::expr::EvalError => "eval",
    std::io::Error => "io",
}

fn init_threads() -> Result<(), ConfigError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError::at(THREADS_ENV, format!("expected a positive integer, got `{raw}`")))?;
    // a second call in the same process (tests) finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    manifest::mark_start();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let json_errors = cli.json_errors;
    let result = init_threads().map_err(CliError::from).and_then(|()| dispatch(cli.command));
    match result {
        Ok(()) => 0,
        Err(e) => {
            if json_errors || matches!(e, CliError::Domain { .. }) {
                eprintln!("{}", e.to_json());
            } else {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::MarkovCheck {
            matrix,
            init,
            nmax,
            tol,
            row_stochastic,
            out,
        } => commands::markov_check(&matrix, &init, nmax, tol, row_stochastic, out.as_deref()),
        Command::Dbl { mu, nu, out } => commands::dbl(&mu, &nu, out.as_deref()),
        Command::SimulateSde { config, out } => commands::simulate_sde(&config, &out),
        Command::FpSolve { config, out, snapshots } => commands::fp_solve(&config, &out, &snapshots),
        Command::Eigen { config, bc, out } => commands::eigen(&config, bc, &out),
        Command::Stationary { config, out } => commands::stationary(&config, &out),
        Command::Semilinear { config, out } => commands::semilinear(&config, &out),
        Command::Selftest => selftest::run(),
    }
}
