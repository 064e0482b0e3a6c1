//! Command pipeline: `synth`, `preprocess`, `train`, `evaluate`, `report`.

pub mod commands;
pub mod error;
pub mod layout;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use earkd_core::evaluation::EmbedMethod;

use crate::commands::{Outcome, ReportArgs, TrainArgs};
pub use crate::error::{CliError, CliResult};
use crate::manifest::{hash_paths, RunManifest};

/// Environment variable that overrides `--seed`.
pub const SEED_ENV: &str = "EARKD_SEED";

#[derive(Debug, Parser)]
#[command(name = "earkd", version, about = "Ear-EEG sleep staging with cross-modal distillation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EmbedArg {
    Pca,
    Sne,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic paired scalp / ear recordings.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Band-pass, reject noisy ear electrodes and form derivations.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one strategy on one leave-one-subject-out fold.
    Train {
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        arch: Option<String>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        fold: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Frozen scalp teacher checkpoint, required by kd-offline.
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint on the held-out subject of a fold.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        fold: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate evaluation runs into a results table and feature plot.
    Report {
        #[arg(long, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "pca")]
        embed: EmbedArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn execute(command: &Command) -> CliResult<(&'static str, Outcome)> {
    let env = env_seed()?;
    Ok(match command {
        Command::Synth { config, out, seed } => (
            "synth",
            commands::synth(config.as_deref(), out, env.unwrap_or(*seed))?,
        ),
        Command::Preprocess { input, out } => ("preprocess", commands::preprocess(input, out)?),
        Command::Train {
            strategy,
            arch,
            data,
            fold,
            config,
            out,
            teacher,
            seed,
        } => (
            "train",
            commands::train(&TrainArgs {
                strategy,
                arch: arch.as_deref(),
                data,
                fold: *fold,
                config: config.as_deref(),
                out,
                teacher: teacher.as_deref(),
                seed: env.or(*seed),
            })?,
        ),
        Command::Evaluate {
            checkpoint,
            data,
            fold,
            out,
        } => ("evaluate", commands::evaluate(checkpoint, data, *fold, out)?),
        Command::Report {
            runs,
            out,
            svg,
            embed,
            seed,
        } => (
            "report",
            commands::report(&ReportArgs {
                runs,
                out,
                svg: svg.as_deref(),
                embed: match embed {
                    EmbedArg::Pca => EmbedMethod::Pca,
                    EmbedArg::Sne => EmbedMethod::Sne,
                },
                seed: env.unwrap_or(*seed),
            })?,
        ),
    })
}

/// Runs one command and writes its manifest; returns the manifest.
pub fn run_command(command: &Command, args: Vec<String>) -> CliResult<RunManifest> {
    let start = Instant::now();
    let (name, outcome) = execute(command)?;
    let manifest = RunManifest {
        command: name.to_string(),
        args,
        config: outcome.config,
        seed: outcome.seed,
        inputs: hash_paths(&outcome.inputs)?,
        outputs: hash_paths(&outcome.outputs)?,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    manifest.write(&outcome.manifest_path)?;
    Ok(manifest)
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let recorded = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run_command(&cli.command, recorded) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
