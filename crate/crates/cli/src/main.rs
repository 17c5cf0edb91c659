//! Command-line driver: hypergraph generation, simulation ensembles,
//! mean-field integration, threshold reports, beta sweeps and exact-chain
//! checks, all driven by a JSON config file.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{CliError, CliResult, Command, ExperimentConfig};

/// Stochastic SIS epidemics on hypergraphs.
///
/// Flags override the corresponding fields of the config file.
#[derive(Debug, Parser)]
#[command(name = "hypersis", version)]
struct Args {
    /// Subcommand; defaults to the config file's "command" field.
    command: Option<Command>,
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_name = "F")]
    beta: Option<f64>,
    #[arg(long, value_name = "F")]
    delta: Option<f64>,
    #[arg(long, value_name = "F")]
    i0: Option<f64>,
    #[arg(long, value_name = "F")]
    dt: Option<f64>,
    #[arg(long, value_name = "F")]
    t_end: Option<f64>,
    #[arg(long, value_name = "N")]
    runs: Option<usize>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

impl Args {
    fn apply(self, cfg: &mut ExperimentConfig) -> Option<Command> {
        macro_rules! layer {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = Some(v.into());
                }
            )*};
        }
        layer!(seed, beta, delta, i0, dt, t_end, runs);
        if let Some(out) = self.out {
            cfg.outputs.out = Some(out);
        }
        self.command.or(cfg.command)
    }
}

fn thread_pool() -> CliResult<()> {
    let Ok(value) = std::env::var("HYPERSIS_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| {
            CliError::Config(format!(
                "HYPERSIS_THREADS must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn try_main(args: Args) -> CliResult<()> {
    thread_pool()?;
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let command = args.apply(&mut cfg).ok_or_else(|| {
        CliError::Config("no command given on the command line or in the config".into())
    })?;
    commands::run(command, &cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match try_main(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hypersis: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
