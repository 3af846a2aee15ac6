//! `qpcorr`: run experiments, re-render run directories, self-test.
//!
//! Exit status: 0 on success, 1 on runtime failure, 2 on bad usage or an
//! invalid run file.

mod cache;
mod config;
mod output;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::CliConfig;

/// Worker-count override for the acquisition pool.
const WORKERS_ENV: &str = "QPCORR_WORKERS";

#[derive(Parser)]
#[command(name = "qpcorr", version, about = "Qubit-photon entanglement simulation and reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a key = value file.
    Run { config: PathBuf },
    /// Recompute grids, density matrices, metrics and the manifest of a run directory.
    Report { run_dir: PathBuf },
    /// Reduced-scale checks of every module.
    Selftest {
        /// Vacuum-reference cache to verify.
        #[arg(long, default_value = ".qpcorr-cache")]
        cache_dir: PathBuf,
    },
}

/// Full pipeline for one parsed run file, artifacts included.
pub(crate) fn execute(config: &CliConfig, text: &str) -> Result<(), String> {
    for w in config.run.validate().map_err(|e| e.to_string())? {
        eprintln!("warning: {w}");
    }
    let (reference, cached) = cache::obtain(config)?;
    if cached {
        eprintln!("using cached vacuum reference");
    }
    let result = qpcorr::run(&config.run, Some(&reference)).map_err(|e| e.to_string())?;
    output::write_run(config, text, &result)
}

fn configure_workers() -> Result<(), String> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match cli.command {
        Command::Run { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let base = config.parent().map(PathBuf::from).unwrap_or_default();
            let parsed = match CliConfig::parse(&text, &base) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            match execute(&parsed, &text) {
                Ok(()) => {
                    print!("{}", std::fs::read_to_string(parsed.output_dir.join("metrics.txt")).unwrap_or_default());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Report { run_dir } => match output::report(&run_dir) {
            Ok(metrics) => {
                print!("{metrics}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Selftest { cache_dir } => {
            if selftest::run(&cache_dir) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
