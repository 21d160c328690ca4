//! `windclime <stage> --config <path> [--seed N] [--out DIR]`

mod config;
mod output;
mod report;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser};

use config::Config;
use stages::Stage;
use windclime::Result;

#[derive(Debug, Parser)]
#[command(name = "windclime", version, about = "Mixed-climate extreme wind pipeline")]
struct Cli {
    /// Pipeline stage to run.
    #[arg(value_enum, required_unless_present = "validate_config")]
    stage: Option<Stage>,
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`; relative to the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Check the config and all referenced inputs, then exit.
    #[arg(long)]
    validate_config: bool,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = cli.out {
        cfg.output.dir = std::path::absolute(&out)?;
    }
    if cli.validate_config {
        cfg.validate()?;
        println!("config ok: {}", cli.config.display());
        if cli.stage.is_none() {
            return Ok(());
        }
    }
    cfg.validate_values()?;
    let stage = cli.stage.expect("clap requires a stage");
    let written = stages::run(stage, &cfg)?.commit()?;
    for p in written {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}

