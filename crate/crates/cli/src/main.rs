//! `srzoo` command-line entry point.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod config;
mod format;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use srzoo::Shape;

/// Constrained x4 super-resolution model zoo: inspect, run, benchmark and
/// rank models.
#[derive(Debug, Parser)]
#[command(name = "srzoo", version)]
pub struct Cli {
    /// Flat `key = value` file; keys mirror long flag names, flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (otherwise SRZOO_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parameter, MAC and receptive-field report for a model.
    Inspect(InspectArgs),
    /// Bicubic x4 degradation of a directory of HR PNGs.
    Degrade(DegradeArgs),
    /// Write synthetic HR images and their LR versions.
    Synth(SynthArgs),
    /// Initialize and save weights for a model.
    InitWeights(InitWeightsArgs),
    /// Super-resolve every PNG of a directory.
    Infer(InferArgs),
    /// Count, time and score a model on a directory.
    Bench(BenchArgs),
    /// Rank an entries table under the track rules.
    Validate(ValidateArgs),
    /// Search the krahaon layout space under resource bounds.
    Search(SearchArgs),
}

/// Model selection shared by several subcommands.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Registered model id or a graph text file.
    pub model: Option<String>,
    /// Config override `key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// LR input shape for MAC counting.
    #[arg(long, default_value = "1x3x100x100")]
    pub input: Shape,
    /// Also write the graph text to this file.
    #[arg(long, value_name = "FILE")]
    pub graph_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    pub hr_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output root; images go to `<root>/HR` and `<root>/LR`.
    pub root: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub count: usize,
    /// HR side length (multiple of 4).
    #[arg(long, default_value_t = 64)]
    pub size: usize,
}

#[derive(Debug, Args)]
pub struct InitWeightsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// kaiming_uniform, kaiming_normal, zeros or constant(v).
    #[arg(long, default_value = "kaiming_uniform")]
    pub scheme: String,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    pub lr_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Weight file; without it weights are initialized from `--seed`.
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    pub lr_dir: Option<PathBuf>,
    /// Ground truth with the same file names, enables PSNR.
    #[arg(long, value_name = "DIR")]
    pub hr_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    /// Time inside a one-thread pool.
    #[arg(long)]
    pub single_thread: bool,
    /// Skip the untimed pass before each trial.
    #[arg(long)]
    pub no_warmup: bool,
    /// Entries file whose baseline row is used for track verdicts.
    #[arg(long, value_name = "FILE")]
    pub baseline: Option<PathBuf>,
    /// Compare without PSNR / runtime slack.
    #[arg(long)]
    pub strict: bool,
    /// Also write the report JSON to this file.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Entries JSON: list of {team, psnr, params, runtime_s, baseline}.
    pub entries: Option<PathBuf>,
    /// Use the shipped results table of this track instead of a file.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3), conflicts_with = "entries")]
    pub table: Option<u8>,
    /// Track to rank (default: all three).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub track: Option<u8>,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub max_params: Option<u64>,
    #[arg(long)]
    pub max_macs: Option<u64>,
    #[arg(long)]
    pub max_rf: Option<u64>,
    /// LR input shape for MAC counting.
    #[arg(long, default_value = "1x3x100x100")]
    pub input: Shape,
    /// Number of configs sampled from the space.
    #[arg(long, default_value_t = 300)]
    pub k: usize,
    /// Scan the whole space instead of sampling.
    #[arg(long, conflicts_with = "k")]
    pub full: bool,
    /// Rows shown in text output (0 = all).
    #[arg(long, default_value_t = 20)]
    pub top: usize,
}

pub const THREADS_ENV: &str = "SRZOO_THREADS";

/// Error caused by how the program was invoked (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse(args: Vec<OsString>) -> Result<(Cli, config::Positionals), clap::Error> {
    let matches = Cli::command().try_get_matches_from(&args)?;
    let Some(path) = matches.get_one::<PathBuf>("config").cloned() else {
        let cli = Cli::from_arg_matches(&matches)?;
        return Ok((cli, config::Positionals::default()));
    };
    let file = config::read(&path).map_err(|e| Cli::command().error(clap::error::ErrorKind::Io, e))?;
    let (extra, positionals) =
        config::merge(&matches, &file).map_err(|e| Cli::command().error(clap::error::ErrorKind::ArgumentConflict, e))?;
    let mut merged = args;
    merged.extend(extra.into_iter().map(OsString::from));
    let matches = Cli::command().try_get_matches_from(&merged)?;
    Ok((Cli::from_arg_matches(&matches)?, positionals))
}

fn threads(cli: &Cli) -> anyhow::Result<Option<usize>> {
    if let Some(n) = cli.threads {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli, positionals: config::Positionals) -> anyhow::Result<()> {
    if let Some(n) = threads(&cli)? {
        if n == 0 {
            return Err(usage("thread count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let out = commands::dispatch(cli.command, cli.seed, positionals)?;
    let text = if cli.json { serde_json::to_string_pretty(&out.json)? + "\n" } else { out.text };
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let (cli, positionals) = match parse(std::env::args_os().collect()) {
        Ok(p) => p,
        Err(e) => e.exit(),
    };
    match run(cli, positionals) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
