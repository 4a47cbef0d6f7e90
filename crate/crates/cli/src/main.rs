//! `pvsindy`: simulate PV plants, identify sparse models, design data-driven
//! current controllers and replay grid faults.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::IdentifyMode;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "pvsindy", version, about)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the configuration and PVSINDY_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the configured plant and write its trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Identify a sparse model with a scalar threshold sweep or the adaptive search.
    Identify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "arsr")]
        mode: IdentifyMode,
    },
    /// Design current controllers from an identified model and compare closed loops.
    Control {
        #[command(flatten)]
        common: Common,
        /// Identified model file.
        #[arg(long)]
        model: PathBuf,
    },
    /// Replay the configured grid fault on the physical and data-driven systems.
    Fault {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    cfg.resolve_output(common.out.clone());
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common } => commands::simulate(&load(&common)?),
        Command::Identify { common, mode } => commands::identify(&load(&common)?, mode),
        Command::Control { common, model } => commands::control(&load(&common)?, &model),
        Command::Fault { common, model } => commands::fault(&load(&common)?, &model),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
