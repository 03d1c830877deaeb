//! `priorkrylov`: configuration-driven runner for the solvers in the
//! `priorkrylov` library.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use priorkrylov::solvers::Method;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("solver breakdown: {0}")]
    Breakdown(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Breakdown(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

#[derive(Parser, Debug)]
#[command(name = "priorkrylov", version, about = "Iteratively reweighted Krylov solvers for sparse reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one configuration; writes history.csv and summary.json.
    Run { config: PathBuf },
    /// Run every *.json configuration in a directory on the same problem.
    Compare {
        dir: PathBuf,
        /// Output directory (default: the first configuration's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Final RRE and Gini index over a grid of MM smoothing parameters.
    SweepEpsilon {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6])]
        eps: Vec<f64>,
        /// Methods to sweep (default: the configuration's method).
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
    },
    /// Dense eigenvalue bound reports at the final iterate (N ≤ 512).
    Spectra { config: PathBuf },
}

fn init_threads() {
    if let Some(n) = std::env::var("PRIORKRYLOV_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let result = match cli.command {
        Command::Run { config } => commands::run(&config),
        Command::Compare { dir, out } => commands::compare(&dir, out.as_deref()),
        Command::SweepEpsilon { config, eps, methods } => commands::sweep_epsilon(&config, &eps, methods.as_deref()),
        Command::Spectra { config } => commands::spectra(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
