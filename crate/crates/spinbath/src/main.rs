use std::path::PathBuf;
use std::process::exit;

use clap::{Parser, Subcommand};

use spinbath::config::{parse_config, RunConfig};
use spinbath::runner::{dispatch, Command, Overrides};

/// Stochastic-limit dynamics of dissipative spin lattices.
#[derive(Parser)]
#[command(name = "spinbath", version, about)]
struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override for every stochastic component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress stdout reporting.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the numerical identity suite and emit JSON records.
    Verify,
    /// Dump per-channel susceptibilities as CSV.
    Rates {
        /// Also dump the classical single-flip rate table.
        #[arg(long)]
        classical: bool,
    },
    /// Integrate the master equation and record observables.
    Evolve,
    /// Run a quantum trajectory ensemble.
    Trajectories,
    /// Kinetic Monte Carlo on the induced classical chain.
    Kmc,
    /// Stationary states of the generator.
    Steady,
}

fn main() {
    let cli = Cli::parse();
    let (config, config_dir) = match &cli.config {
        Some(path) => match parse_config(path) {
            Ok(c) => (
                c,
                path.parent()
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from(".")),
            ),
            Err(e) => {
                eprintln!("error: {e}");
                exit(e.exit_code());
            }
        },
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    let command = match cli.command {
        Cmd::Verify => Command::Verify,
        Cmd::Rates { classical } => Command::Rates { classical },
        Cmd::Evolve => Command::Evolve,
        Cmd::Trajectories => Command::Trajectories,
        Cmd::Kmc => Command::Kmc,
        Cmd::Steady => Command::Steady,
    };
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    match dispatch(command, &config, &config_dir, &overrides) {
        Ok(code) => exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            exit(e.exit_code());
        }
    }
}
