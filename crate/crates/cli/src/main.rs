//! `ncptomo` command-line driver.
//!
//! Each subcommand reads a JSON config, validates it completely, runs one
//! simulation and writes JSON/CSV files into the output directory.
//!
//! Exit codes: 0 success, 1 output could not be written, 2 invalid input,
//! 3 an input preparation failed, 4 the ML optimizer did not converge.

mod commands;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::{OutputError, Run};

#[derive(Parser)]
#[command(name = "ncptomo", version, about = "Channel, discord and tomography simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seed for all random sampling; overrides any seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Discord in both directions plus the full angle landscape.
    Discord(Common),
    /// Standard process tomography with a chosen preparation procedure.
    Sqpt(Common),
    /// Ancilla-assisted process tomography of a channel.
    Aapt(Common),
    /// Monte Carlo of tomography under counting noise.
    NoiseMc(Common),
    /// Wave-plate preparation experiment on a CNOT.
    Optics(Common),
}

fn run(cli: Cli) -> Result<()> {
    let (common, command) = match &cli.command {
        Command::Discord(c) => (c, "discord"),
        Command::Sqpt(c) => (c, "sqpt"),
        Command::Aapt(c) => (c, "aapt"),
        Command::NoiseMc(c) => (c, "noise-mc"),
        Command::Optics(c) => (c, "optics"),
    };
    let run = Run {
        out: common.out.clone(),
        seed: common.seed,
    };
    // Parse before touching the output directory.
    let path = &common.config;
    let prepare = |run: &Run| -> Result<()> {
        std::fs::create_dir_all(&run.out).map_err(|e| OutputError::new(run.out.clone(), e.into()))?;
        Ok(())
    };
    match command {
        "discord" => {
            let cfg = commands::load(path)?;
            prepare(&run)?;
            commands::discord_cmd(cfg, &run)
        }
        "sqpt" => {
            let cfg = commands::load(path)?;
            prepare(&run)?;
            commands::sqpt_cmd(cfg, &run)
        }
        "aapt" => {
            let cfg = commands::load(path)?;
            prepare(&run)?;
            commands::aapt_cmd(cfg, &run)
        }
        "noise-mc" => {
            let cfg = commands::load(path)?;
            prepare(&run)?;
            commands::noise_cmd(cfg, &run)
        }
        _ => {
            let cfg = commands::load(path)?;
            prepare(&run)?;
            commands::optics_cmd(cfg, &run)
        }
    }
    .with_context(|| format!("{command} failed"))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<OutputError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<ncptomo::Error>() {
            match e {
                ncptomo::Error::PreparationFailed { .. } => return 3,
                ncptomo::Error::NotConverged { .. } => return 4,
                _ => {}
            }
        }
    }
    2
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
