//! `synthreg`: simulate, synthesize, evaluate, model, and disclosure-check
//! longitudinal business registers.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use synthreg_core::Error;

use config::{Overrides, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "synthreg",
    about = "Partially synthetic business register pipeline",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct CommonArgs {
    /// TOML configuration file; flags override its keys.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

impl CommonArgs {
    fn resolve(&self) -> synthreg_core::Result<PipelineConfig> {
        let mut config = PipelineConfig::load(self.config.as_deref())?;
        self.overrides.apply(&mut config);
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a ground-truth register plus a true-parameter sidecar.
    Simulate(CommonArgs),
    /// Produce a synthetic register and the per-industry synthesis report.
    Synthesize(CommonArgs),
    /// Descriptive dynamics, share tables, pMSE, and CIO for a register pair.
    Evaluate(CommonArgs),
    /// Dynamic panel models on both registers with bias and test tables.
    Panel(CommonArgs),
    /// Birth-year concordance disclosure measure.
    Disclosure(CommonArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap prints its own message; usage problems exit with code 1.
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let run = || -> synthreg_core::Result<()> {
        match &cli.command {
            Command::Simulate(args) => commands::cmd_simulate(&args.resolve()?),
            Command::Synthesize(args) => commands::cmd_synthesize(&args.resolve()?),
            Command::Evaluate(args) => commands::cmd_evaluate(&args.resolve()?),
            Command::Panel(args) => commands::cmd_panel(&args.resolve()?),
            Command::Disclosure(args) => commands::cmd_disclosure(&args.resolve()?),
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Numerical(_) | Error::SingularDesign(_) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
