//! `tpivot` command-line front end.
//!
//! Exit codes: 0 success, 1 a validated file is invalid, 2 configuration or
//! input-schema error, 3 backend failure, 4 I/O error.

mod commands;
mod config;
mod evaluate;
mod sweep;
pub mod synth;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::RunOutput;
pub use config::{BackendArgs, BackendKind, RunConfig, SearchArgs, VideoArgs};
pub use evaluate::EvaluateArgs;
pub use sweep::{Cell, SweepArgs, SweepRow, SweepSpec, SweepTask};

#[derive(Debug, Parser)]
#[command(
    name = "tpivot",
    version,
    about = "Temporal action localization by iterative visual prompting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Localize one action occurrence (start and end).
    Localize(LocalizeArgs),
    /// Estimate transitions between an ordered list of gapless tasks.
    Transitions(TransitionsArgs),
    /// Scan a long video window by window for every occurrence of each label.
    Scan(ScanArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Run a grid of search configurations over a set of videos.
    Sweep(SweepArgs),
    /// Check that a timeline file is well formed (and gapless by default).
    Validate(ValidateArgs),
    /// Extract frames from a video file with ffmpeg.
    Extract(ExtractArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub video: VideoArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Worker threads for concurrent boundary searches.
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    /// Output file (default: stdout).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// Free-text action label.
    #[arg(long)]
    pub query: String,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct TransitionsArgs {
    /// Ordered task labels: a JSON array or one label per line.
    #[arg(long, required_unless_present = "labels_from_gt")]
    pub labels: Option<PathBuf>,
    /// Take the task order from the ground-truth timeline.
    #[arg(long, conflicts_with = "labels")]
    pub labels_from_gt: bool,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Label to scan for; repeatable.
    #[arg(long)]
    pub query: Vec<String>,
    /// File with more labels: a JSON array or one label per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = tpivot_core::localizer::DEFAULT_SCAN_WINDOW_S)]
    pub scan_window: f64,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Timeline JSON, or a `transitions` output file.
    pub timeline: PathBuf,
    /// Only require disjoint in-range segments; gaps are allowed.
    #[arg(long)]
    pub allow_gaps: bool,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub video: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub fps: f64,
    #[arg(long, default_value = "ffmpeg")]
    pub ffmpeg: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Invalid,
    Config,
    Backend,
    Io,
}

impl Failure {
    pub fn exit_code(self) -> i32 {
        match self {
            Failure::Invalid => 1,
            Failure::Config => 2,
            Failure::Backend => 3,
            Failure::Io => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Failure,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(kind: Failure, error: anyhow::Error) -> Self {
        Self { kind, error }
    }

    pub fn config(error: anyhow::Error) -> Self {
        Self::new(Failure::Config, error)
    }

    pub fn io(error: anyhow::Error) -> Self {
        Self::new(Failure::Io, error)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub(crate) trait ResultExt<T> {
    fn kind(self, kind: Failure) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> ResultExt<T> for Result<T, E> {
    fn kind(self, kind: Failure) -> Result<T, CliError> {
        self.map_err(|e| CliError::new(kind, e.into()))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Localize(a) => commands::localize(&a),
        Command::Transitions(a) => commands::transitions(&a),
        Command::Scan(a) => commands::scan(&a),
        Command::Evaluate(a) => evaluate::evaluate(&a),
        Command::Sweep(a) => sweep::sweep(&a),
        Command::Validate(a) => commands::validate(&a),
        Command::Extract(a) => commands::extract(&a),
    }
}
