mod commands;
mod config;
mod error;
mod format;
mod svg;

use clap::{Parser, Subcommand};
use config::RunConfig;
use error::CliError;
use ionsim_core::dynamics::SpinBosonMode;
use std::path::PathBuf;

/// Two-level coherence loss: spin-boson master equation vs classical white
/// noise, with Monte Carlo validation of the noise picture.
#[derive(Parser)]
#[command(name = "ionsim", version, about)]
struct Cli {
    /// Run configuration (flat `section.key = value` text file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output CSV path (or directory for demo-figures).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Optional SVG chart path.
    #[arg(long, global = true)]
    svg: Option<PathBuf>,

    /// Override the spin-boson mode: verbatim | hermitian.
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Override the ensemble master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker-thread count (results are identical for any value).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print master-equation coefficients from the spectral environment.
    Coeffs {
        /// Also compute the coefficients by numerical quadrature.
        #[arg(long)]
        numeric: bool,
    },
    /// Integrate one model and write the trajectory CSV.
    Evolve,
    /// Monte Carlo ensemble average of unitary noise realizations.
    Ensemble,
    /// Run both models on a shared grid and write their difference.
    Compare {
        /// Derive coefficients from the environment instead of using an
        /// explicit coefficient set.
        #[arg(long)]
        derive_coeffs: bool,
    },
    /// Sweep the hopping rate and summarize the model difference per rate.
    Sweep {
        /// Re-derive the coefficients from the environment at every rate.
        #[arg(long)]
        derive_coeffs: bool,
    },
    /// Decoherence-time estimate over a (rate, frequency) grid.
    Tau,
    /// Write and run the bundled demo configurations.
    DemoFigures,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config <path> is required for this command"))?;
    let mut config = RunConfig::load(path)?;
    if let Some(mode) = &cli.mode {
        config.mode = Some(match mode.as_str() {
            "hermitian" => SpinBosonMode::Hermitian,
            "verbatim" => SpinBosonMode::Verbatim,
            other => {
                return Err(CliError::config(format!(
                    "--mode must be hermitian | verbatim, got '{other}'"
                )))
            }
        });
    }
    Ok(config)
}

fn require_out(cli: &Cli) -> Result<PathBuf, CliError> {
    cli.out
        .clone()
        .or_else(|| {
            load_config(cli)
                .ok()
                .and_then(|c| c.output_csv.map(PathBuf::from))
        })
        .ok_or_else(|| CliError::config("--out <path> (or output.csv in the config) is required"))
}

fn svg_path(cli: &Cli, config: &RunConfig) -> Option<PathBuf> {
    cli.svg
        .clone()
        .or_else(|| config.output_svg.clone().map(PathBuf::from))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Coeffs { numeric } => commands::cmd_coeffs(&load_config(cli)?, *numeric),
        Command::Evolve => {
            let config = load_config(cli)?;
            let out = require_out(cli)?;
            commands::cmd_evolve(&config, &out)
        }
        Command::Ensemble => {
            let config = load_config(cli)?;
            let out = require_out(cli)?;
            commands::cmd_ensemble(&config, &out, cli.seed)
        }
        Command::Compare { derive_coeffs } => {
            let config = load_config(cli)?;
            let out = require_out(cli)?;
            let svg = svg_path(cli, &config);
            commands::cmd_compare(&config, &out, svg.as_deref(), *derive_coeffs)
        }
        Command::Sweep { derive_coeffs } => {
            let config = load_config(cli)?;
            let out = require_out(cli)?;
            let svg = svg_path(cli, &config);
            commands::cmd_sweep(&config, &out, svg.as_deref(), *derive_coeffs)
        }
        Command::Tau => {
            let config = load_config(cli)?;
            commands::cmd_tau(&config, cli.out.as_deref())
        }
        Command::DemoFigures => {
            let out = cli
                .out
                .clone()
                .ok_or_else(|| CliError::config("--out <directory> is required"))?;
            commands::cmd_demo_figures(&out)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build();
            match pool {
                Ok(pool) => pool.install(|| run(&cli)),
                Err(e) => Err(CliError::config(format!("building worker pool: {e}"))),
            }
        }
        None => run(&cli),
    };
    if let Err(err) = result {
        eprintln!("{err}");
        std::process::exit(err.exit_code());
    }
}
