//! `ordmatch`: experiment runner for ordinal b-matching mechanisms.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 assertion or oracle failure.

mod commands;
mod config;
mod format;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ordmatch::Estimator;

use config::Overrides;

pub const THREADS_ENV: &str = "ORDMATCH_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Assertion(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Assertion(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "error: {m}"),
            Self::Assertion(m) => write!(f, "assertion failed: {m}"),
        }
    }
}

impl From<ordmatch::Error> for CliError {
    fn from(e: ordmatch::Error) -> Self {
        if e.is_assertion() {
            Self::Assertion(e.to_string())
        } else {
            Self::Usage(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "ordmatch", version, about = "Distortion experiments for ordinal b-matching mechanisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate distortion and distortion gap for every configured cell.
    Run(ExperimentArgs),
    /// Estimate per-(agent, rank) assignment probabilities next to their closed forms.
    Probs(ExperimentArgs),
    /// Write the distortion-gap bound curve on a uniform grid of (0, 1].
    Curve {
        #[arg(long, default_value_t = 10_000)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check the assignment solver against exhaustive search.
    Optcheck {
        #[arg(long = "max-m", default_value_t = 7)]
        max_m: usize,
        #[arg(long, default_value_t = 200)]
        cases: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Chi-square test that every favorite bundle is equally likely.
    Ufaudit(AuditArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration.
    config: PathBuf,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Fill leftover items after each mechanism run.
    #[arg(long)]
    complete: bool,
    #[arg(long)]
    emit_probs: bool,
    #[arg(long)]
    emit_curve: bool,
}

impl ExperimentArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            trials: self.trials,
            seed: self.seed,
            output: self.output.clone(),
            complete: self.complete,
            emit_probs: self.emit_probs,
            emit_curve: self.emit_curve,
        }
    }
}

#[derive(Args)]
struct AuditArgs {
    config: PathBuf,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 0.001)]
    alpha: f64,
}

fn estimator() -> Result<Estimator, CliError> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v} is not a thread count")))?,
        _ => 0,
    };
    Ok(Estimator::with_threads(threads))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let exp = config::load(&args.config)?.resolve(&args.overrides(), true)?;
            commands::run(&exp, &estimator()?)
        }
        Command::Probs(args) => {
            let exp = config::load(&args.config)?.resolve(&args.overrides(), true)?;
            commands::probs(&exp, &estimator()?, exp.output.as_deref())
        }
        Command::Curve { points, out } => commands::curve(points, out.as_deref()),
        Command::Optcheck { max_m, cases, seed } => {
            println!("{}", commands::optcheck(max_m, cases, seed)?);
            Ok(())
        }
        Command::Ufaudit(args) => {
            let overrides = Overrides {
                trials: args.trials,
                seed: args.seed,
                output: args.output.clone(),
                ..Overrides::default()
            };
            let exp = config::load(&args.config)?.resolve(&overrides, false)?;
            commands::ufaudit(&exp, args.alpha)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
