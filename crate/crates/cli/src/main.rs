//! `lhtraffic`: simulation, stability analysis and early-warning indicators
//! for the area-occupancy lattice hydrodynamic traffic model.

mod commands;
mod config;
mod output;
mod presets;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lhtraffic::ews::EwsConfig;
use lhtraffic::exec::ExecMode;
use lhtraffic::simulate::SimError;
use serde::de::DeserializeOwned;
use serde::Serialize;

use config::{SimulateFile, StabilityFile};
use output::OutputDir;

/// Exit code for invalid configuration or input.
const EXIT_INVALID: u8 = 2;
/// Exit code when a simulation produces a non-finite density.
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "lhtraffic",
    version,
    about = "Lattice hydrodynamic traffic model with passing"
)]
struct Cli {
    /// Evaluate sweeps on one thread even when the parallel backend is built.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, env = "LHTRAFFIC_OUT", default_value = "lhtraffic-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// Only check the configuration and exit.
    #[arg(long)]
    validate: bool,
    /// Print the default configuration as TOML and exit.
    #[arg(long, conflicts_with = "validate")]
    print_defaults: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trajectory, diagnostics and plots.
    Simulate {
        /// Scenario TOML file.
        #[arg(long, required_unless_present = "print_defaults")]
        config: Option<PathBuf>,
        /// Override the noise seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArg,
        #[command(flatten)]
        flags: ConfigArgs,
    },
    /// Neutral and coexisting curves, point reports and parameter sweeps.
    Stability {
        /// Stability TOML file.
        #[arg(long, alias = "sweep", required_unless_present = "print_defaults")]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
        #[command(flatten)]
        flags: ConfigArgs,
    },
    /// Early-warning indicators of a probe or full-field series.
    Ews {
        /// CSV with `t_seconds,value`, `t_seconds,rho_star_mean_probe` or
        /// `t_seconds,site,rho_star` columns.
        #[arg(long, required_unless_present_any = ["print_defaults", "validate"])]
        input: Option<PathBuf>,
        /// Indicator TOML file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
        #[command(flatten)]
        flags: ConfigArgs,
    },
    /// Run a built-in preset and write its full output bundle.
    Pipeline {
        /// One of fig2a, fig2b, fig2c, fig2d, fig3-kink, fig3-chaotic,
        /// fig4-kink, fig4-chaotic.
        #[arg(long)]
        preset: String,
        /// Noise seed for the ramped presets.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
}

fn print_toml<T: Serialize>(value: &T) -> Result<()> {
    print!("{}", config::to_toml(value)?);
    Ok(())
}

fn load_or<T: DeserializeOwned>(path: Option<&Path>, default: impl FnOnce() -> T) -> Result<T> {
    path.map_or_else(|| Ok(default()), config::load)
}

fn finish(
    dir: OutputDir,
    command: &str,
    preset: Option<&str>,
    seed: Option<u64>,
    snapshot: serde_json::Value,
) -> Result<()> {
    let manifest = dir.finish(command, preset, seed, snapshot)?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mode = if cli.sequential {
        ExecMode::Sequential
    } else {
        ExecMode::available()
    };
    match cli.command {
        Command::Simulate {
            config,
            seed,
            out,
            flags,
        } => {
            if flags.print_defaults {
                return print_toml(&SimulateFile::reference(3.5));
            }
            let file: SimulateFile =
                config::load(config.as_deref().context("--config is required")?)?;
            if flags.validate {
                file.validate()?;
                println!("valid");
                return Ok(());
            }
            let mut dir = OutputDir::create(&out.out)?;
            let snapshot = commands::simulate(&mut dir, &file, seed)?;
            let seed = file.effective_scenario(seed)?.noise.map(|n| n.seed);
            finish(dir, "simulate", None, seed, snapshot)
        }
        Command::Stability { config, out, flags } => {
            if flags.print_defaults {
                return print_toml(&StabilityFile::reference());
            }
            let file: StabilityFile =
                config::load(config.as_deref().context("--config is required")?)?;
            if flags.validate {
                file.validate()?;
                println!("valid");
                return Ok(());
            }
            let mut dir = OutputDir::create(&out.out)?;
            let snapshot = commands::stability(&mut dir, &file, mode)?;
            finish(dir, "stability", None, None, snapshot)
        }
        Command::Ews {
            input,
            config,
            out,
            flags,
        } => {
            if flags.print_defaults {
                return print_toml(&EwsConfig::default());
            }
            let cfg: EwsConfig = load_or(config.as_deref(), EwsConfig::default)?;
            if flags.validate {
                cfg.validate()?;
                println!("valid");
                return Ok(());
            }
            let Some(input) = input else {
                bail!("--input is required")
            };
            let mut dir = OutputDir::create(&out.out)?;
            let snapshot = commands::ews(&mut dir, &input, &cfg)?;
            finish(dir, "ews", None, None, snapshot)
        }
        Command::Pipeline { preset, seed, out } => {
            let Some(job) = presets::build(&preset, seed) else {
                bail!(
                    "unknown preset '{preset}'; expected one of {}",
                    presets::NAMES.join(", ")
                );
            };
            let mut dir = OutputDir::create(&out.out)?;
            match job {
                presets::Job::Stability(file) => {
                    dir.write("config.toml", config::to_toml(&file)?.as_bytes())?;
                    let snapshot = commands::stability(&mut dir, &file, mode)?;
                    finish(dir, "pipeline", Some(&preset), None, snapshot)
                }
                presets::Job::Simulate(file) => {
                    dir.write("config.toml", config::to_toml(&file)?.as_bytes())?;
                    let snapshot = commands::simulate(&mut dir, &file, None)?;
                    let seed = file.effective_scenario(None)?.noise.map(|n| n.seed);
                    finish(dir, "pipeline", Some(&preset), seed, snapshot)
                }
            }
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<SimError>(),
            Some(SimError::NonFinite { .. })
        )
    });
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_INVALID
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
