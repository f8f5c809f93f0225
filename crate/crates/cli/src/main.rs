//! `fourfold`: simulate, sample, extract, reconstruct and verify from the command line.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fourfold::{Statistics, Tolerances};

/// Exit status of a failed command.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn schema(message: impl std::fmt::Display) -> Self {
        CliError { code: 2, message: message.to_string() }
    }

    pub fn inconsistent(message: impl std::fmt::Display) -> Self {
        CliError { code: 3, message: message.to_string() }
    }

    pub fn precondition(message: impl std::fmt::Display) -> Self {
        CliError { code: 4, message: message.to_string() }
    }

    pub fn invariant(message: impl std::fmt::Display) -> Self {
        CliError { code: 5, message: message.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "fourfold", version, about = "Four-particle interference on the hypercube multiport")]
pub struct Cli {
    /// Override the exchange statistics of the input.
    #[arg(long, global = true)]
    pub statistics: Option<Statistics>,
    /// Tolerance override as key=value; repeatable.
    #[arg(long = "tolerance", global = true, value_name = "KEY=VALUE")]
    pub tolerances: Vec<String>,
    /// Output file; stdout when absent.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write an ensemble file.
    Generate {
        #[arg(value_enum)]
        kind: EnsembleKind,
        #[arg(long, default_value_t = 4)]
        dimension: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pair made exactly orthogonal, as `a-b`; repeatable, random-pure only.
        #[arg(long = "orthogonal", value_name = "A-B")]
        orthogonal: Vec<String>,
    },
    /// Exact output statistics of an ensemble.
    Simulate {
        ensemble: PathBuf,
        /// Also simulate with this particle made distinguishable; repeatable.
        /// Each marked run is written next to --output as `<stem>.marked-<α>.<ext>`.
        #[arg(long = "mark", value_name = "α")]
        marks: Vec<usize>,
    },
    /// Draw a finite number of detection events from statistics.
    Sample {
        statistics_file: PathBuf,
        #[arg(long)]
        shots: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Split the shots into this many independently seeded batches.
        #[arg(long, default_value_t = 1)]
        batches: u64,
    },
    /// Extract overlap quantifiers from statistics or shot counts.
    Extract {
        input: PathBuf,
        /// Statistics or shot record of a marked-particle run; repeatable.
        #[arg(long = "marked-run", value_name = "FILE")]
        marked_runs: Vec<PathBuf>,
        /// Declare whether the internal states are pure.
        #[arg(long)]
        pure: Option<bool>,
    },
    /// Rebuild collective phases and ρ_E from an extraction report.
    Reconstruct { report: PathBuf },
    /// Run the invariant suite on an ensemble.
    Verify {
        ensemble: PathBuf,
        /// Perturb the hypercube by this strength before checking.
        #[arg(long)]
        perturb: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EnsembleKind {
    Distinguishable,
    Ideal,
    RandomPure,
    RandomMixed,
}

fn tolerances(cli: &Cli) -> Result<Tolerances, CliError> {
    let mut tol = Tolerances::default();
    for spec in &cli.tolerances {
        tol.apply_override(spec).map_err(CliError::schema)?;
    }
    Ok(tol)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let tol = tolerances(cli)?;
    match &cli.command {
        Command::Generate { kind, dimension, seed, orthogonal } => {
            commands::generate(cli, *kind, *dimension, *seed, orthogonal)
        }
        Command::Simulate { ensemble, marks } => commands::simulate(cli, &tol, ensemble, marks),
        Command::Sample { statistics_file, shots, seed, batches } => {
            commands::sample(cli, &tol, statistics_file, *shots, *seed, *batches)
        }
        Command::Extract { input, marked_runs, pure } => commands::extract(cli, &tol, input, marked_runs, *pure),
        Command::Reconstruct { report } => commands::reconstruct(cli, &tol, report),
        Command::Verify { ensemble, perturb, seed } => commands::verify(cli, &tol, ensemble, *perturb, *seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
