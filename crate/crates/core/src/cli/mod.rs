//! Command-line front end. Every subcommand writes its artifacts into a run
//! directory together with the resolved configuration.

mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::corpus::{CorpusFormat, Split, Stratum};
use crate::embeddings::TaskTag;
use crate::parser::Fallback;
use crate::prompt::Mode;

pub use config::{BackendKind, RunConfig, API_KEY_ENV};

/// Exit status: invalid input or configuration.
pub const EXIT_INVALID: i32 = 2;
/// Exit status: runtime failure, or a grid where some cells failed.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "transcript-risk",
    version,
    about = "Suicide-risk screening experiments on interview transcripts"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write artifacts here instead of a fresh timestamped directory.
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Parent of timestamped run directories.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Corpus file (.jsonl or .csv).
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub corpus_format: Option<CorpusFormat>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (and optionally slice embeddings).
    Synth(SynthArgs),
    /// Assign train/dev/test splits by stratified sampling.
    Split(SplitArgs),
    /// Classify one split with a single prompt configuration.
    Classify(ClassifyArgs),
    /// Run the shot-count × model × seed grid.
    Ablate(AblateArgs),
    /// Train the slice-embedding logistic baseline and sweep pooling.
    Baseline(BaselineArgs),
    /// Fit the regression over ablation run records.
    Stats(StatsArgs),
    /// Rebuild reports from an existing run directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Corpus output path; the extension picks the format.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 600)]
    pub n: usize,
    /// At-risk subjects; half of `n` by default.
    #[arg(long)]
    pub at_risk: Option<usize>,
    /// Female subjects; 70% of `n` by default.
    #[arg(long)]
    pub female: Option<usize>,
    #[arg(long, default_value_t = 0.15)]
    pub label_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write slice embeddings here.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Also write the split corpus here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Train,dev,test proportions as decimals, ratios (`2/3`) or counts.
    #[arg(long, default_value = "2/3,1/6,1/6")]
    pub fractions: String,
    #[arg(long, value_delimiter = ',', default_value = "label")]
    pub strata: Vec<Stratum>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Default)]
pub struct BackendArgs {
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub base_url: Option<String>,
    /// Backend calls in flight at once.
    #[arg(long)]
    pub concurrency: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(short, long)]
    pub k: Option<usize>,
    /// Demo sampling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sample demos half per label.
    #[arg(long)]
    pub balanced: bool,
    #[arg(long)]
    pub fallback: Option<Fallback>,
    #[arg(long)]
    pub split: Option<Split>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Re-run cells that already have a record.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub fallback: Option<Fallback>,
    #[arg(long)]
    pub split: Option<Split>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Pooling specs, e.g. `mean,max,mellowmax(1.0)`.
    #[arg(long, value_delimiter = ',')]
    pub pooling: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub tasks: Vec<TaskTag>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub l2_lambda: Option<f64>,
    #[arg(long)]
    pub split: Option<Split>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Run-record JSONL written by `ablate`.
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory holding `records.jsonl` and/or `predictions.jsonl`.
    #[arg(long)]
    pub from: PathBuf,
}

/// Error classified by the exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => EXIT_INVALID,
            Failure::Runtime(_) => EXIT_FAILURE,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Invalid(e) | Failure::Runtime(e) => e,
        }
    }
}

pub(crate) fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Invalid(e.into())
}

pub(crate) fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Parses `std::env::args` and runs the chosen subcommand; returns the exit status.
pub fn main() -> i32 {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match execute(cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            failure.exit_code()
        }
    }
}

/// Runs a parsed command line.
pub fn execute(cli: Cli) -> Result<i32, Failure> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(invalid)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(path) = &cli.corpus {
        config.corpus.path = Some(path.clone());
    }
    if let Some(format) = cli.corpus_format {
        config.corpus.format = Some(format_token(format).into());
    }
    let ctx = commands::Context {
        config,
        run_dir: cli.run_dir,
    };
    match cli.command {
        Command::Synth(args) => commands::synth(ctx, args),
        Command::Split(args) => commands::split(ctx, args),
        Command::Classify(args) => commands::classify(ctx, args),
        Command::Ablate(args) => commands::ablate(ctx, args),
        Command::Baseline(args) => commands::baseline(ctx, args),
        Command::Stats(args) => commands::stats(ctx, args),
        Command::Report(args) => commands::report(ctx, args),
    }
}

fn format_token(format: CorpusFormat) -> &'static str {
    match format {
        CorpusFormat::Jsonl => "jsonl",
        CorpusFormat::Csv => "csv",
    }
}

pub(crate) fn resolve_format(path: &Path, explicit: Option<&str>) -> Result<CorpusFormat, Failure> {
    match explicit {
        Some(f) => f.parse().map_err(|e: String| invalid(anyhow::anyhow!(e))),
        None => CorpusFormat::from_path(path).ok_or_else(|| {
            invalid(anyhow::anyhow!(
                "cannot infer corpus format of {}; pass --corpus-format",
                path.display()
            ))
        }),
    }
}
