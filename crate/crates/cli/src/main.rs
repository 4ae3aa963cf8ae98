//! `ttc`: solve, play back, verify and study truncation of minimum-energy
//! control problems on temporal trees.
//!
//! Exit codes: 0 pass, 1 usage or config error, 2 numerical tolerance breach.

mod commands;
mod config;

use std::hash::{BuildHasher, RandomState};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Run, SeedSource};
use config::Tolerances;

#[derive(Parser)]
#[command(name = "ttc", version, about = "Minimum-energy control on temporal trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Seed for sampling; overrides the config, random if neither is given
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the boundary value problem and export trajectory and controls
    Solve(Common),
    /// Play back the controls along one scenario path
    Playback(Common),
    /// Optimality certificate, operator checks and a priori sweep
    Verify(Common),
    /// Energy as a function of the number of retained states
    Converge(Common),
}

type Handler = fn(Run) -> Result<bool, CliError>;

fn run(cli: Cli) -> Result<bool, CliError> {
    let (name, common, cmd): (_, _, Handler) = match cli.command {
        Command::Solve(c) => ("solve", c, commands::cmd_solve),
        Command::Playback(c) => ("playback", c, commands::cmd_playback),
        Command::Verify(c) => ("verify", c, commands::cmd_verify),
        Command::Converge(c) => ("converge", c, commands::cmd_converge),
    };
    let tol = Tolerances::from_env().map_err(CliError::Config)?;
    let loaded = config::load(&common.config).map_err(CliError::Config)?;
    let (seed, source) = match (common.seed, loaded.config.seed) {
        (Some(s), _) => (s, SeedSource::Flag),
        (None, Some(s)) => (s, SeedSource::Config),
        (None, None) => (RandomState::new().hash_one(std::process::id()), SeedSource::Random),
    };
    cmd(Run::new(name, &common.out, loaded, seed, source, tol)?)
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors; 2 is reserved for tolerance breaches.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
