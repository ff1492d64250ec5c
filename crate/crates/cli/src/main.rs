//! `momentfit` command-line driver.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Resolved, RunConfig};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "momentfit", version, about = "Surrogate-likelihood inference for ODE models with random parameters")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Simulate snapshot data (data.csv).
    Generate,
    /// Maximum-likelihood estimate (fit.json).
    Fit,
    /// Profile likelihoods (profile.json, profile.csv).
    Profile,
    /// Adaptive Metropolis chains (chains.csv, mcmc_summary.json).
    Mcmc,
    /// Surrogate density on a grid (density.csv, density_joint.csv).
    Density,
    /// Build and save a copula table.
    CopulaTable,
    /// Moment and KS comparison against simulation (validate.json).
    Validate,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::schema(format!("--threads: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.seed = Some(cli.seed.or(cfg.seed).unwrap_or(0));
    let seed = cfg.seed.unwrap_or(0);
    if let Command::CopulaTable = cli.command {
        let out = commands::Artifacts::new(&cli.out, cfg.hash(), seed)?;
        out.json("resolved_config.json", &cfg)?;
        return commands::copula_table(&cfg, &out);
    }
    let r = Resolved::new(&cfg)?;
    let cfg = r.fill(cfg);
    let out = commands::Artifacts::new(&cli.out, cfg.hash(), seed)?;
    out.json("resolved_config.json", &cfg)?;
    match cli.command {
        Command::Generate => commands::generate(&r, &out),
        Command::Fit => commands::fit(&cfg, &r, &out),
        Command::Profile => commands::profiles(&cfg, &r, &out),
        Command::Mcmc => commands::sample(&cfg, &r, &out),
        Command::Density => commands::density(&cfg, &r, &out),
        Command::Validate => commands::validate(&cfg, &r, &out),
        Command::CopulaTable => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::schema(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code as u8)
        }
    }
}
