//! `racedriver`: learn driving lines from demonstrations, transfer them to
//! new tracks, simulate laps and adapt the target lap by lap.
//!
//! Exit codes: 0 ok, 2 usage, 3 bad input data, 4 runtime failure.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use failure::Failure;

#[derive(Parser)]
#[command(name = "racedriver", version, about = "Probabilistic race-driver model")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build a demonstration library from the demo sets in the config.
    Fit,
    /// Synthesize a driving-line distribution for a track not in the library.
    Generalize {
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long)]
        track: Option<PathBuf>,
    },
    /// Drive one lap along the mean of a target prior.
    Simulate {
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        track: Option<PathBuf>,
    },
    /// Adapt a target prior lap by lap until it completes and stops improving.
    Adapt {
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        track: Option<PathBuf>,
    },
    /// Write a synthetic track and noisy demonstration laps.
    Export {
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(commands::PRESETS))]
        preset: String,
        #[arg(long, default_value_t = 20)]
        laps: usize,
        #[arg(long, default_value_t = 12.0)]
        width: f64,
    },
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let mut config = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.common.out {
        config.out = out;
    }
    config.check_files()?;
    let run = commands::Run::new(config)?;
    println!("config digest {}", run.digest);
    match cli.command {
        Command::Fit => commands::fit(&run),
        Command::Generalize { library, track } => commands::generalize_cmd(&run, library.as_ref(), track.as_ref()),
        Command::Simulate { prior, track } => commands::simulate(&run, &prior, track.as_ref()),
        Command::Adapt { prior, track } => commands::adapt(&run, &prior, track.as_ref()),
        Command::Export { preset, laps, width } => commands::export(&run, &preset, laps, width),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
