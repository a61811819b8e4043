use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ficle_models::checkpoint::StageId;

#[derive(Debug, Parser)]
#[command(name = "ficle", version, about = "Detect, classify and explain factual inconsistencies between a claim and its context")]
pub struct Cli {
    /// Config file (TOML) with [train], [pipeline] and [data] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Log verbosity: error, warn, info, debug.
    #[arg(long, global = true, default_value = "info")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a JSONL corpus against the schema invariants.
    Validate(DataArgs),
    /// Label counts and field lengths of a corpus.
    Stats(DataArgs),
    /// Seeded 80/10/10 split into train/valid/test JSONL files.
    Split(SplitArgs),
    /// Train one stage under one strategy.
    Train(TrainArgs),
    /// Run the full pipeline over a split and write the report bundle.
    Evaluate(EvaluateArgs),
    /// Emit one explanation per input line.
    Predict(PredictArgs),
    /// Error analysis of saved predictions against gold annotations.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Corpus file, or a split directory (see --split).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Split to read when --data is a directory.
    #[arg(long)]
    pub split: Option<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitModeArg {
    Random,
    Stratified,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "random")]
    pub mode: SplitModeArg,
    /// Output directory for train.jsonl, valid.jsonl and test.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_stage)]
    pub stage: StageId,
    /// Strategy name valid for the stage.
    #[arg(long)]
    pub strategy: String,
    /// Split directory or training file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Validation file; defaults to valid.jsonl next to the training data.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Split used for training when --data is a directory.
    #[arg(long)]
    pub split: Option<String>,
    /// Output directory of the trained bundle.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Alias of --checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Keep last-epoch weights instead of the best validation epoch.
    #[arg(long)]
    pub select_last: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// Directory the pipeline's checkpoint paths are resolved against.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Report directory; defaults to eval/<config hash> under the run root.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Serve every stage from the gold annotations (plumbing check).
    #[arg(long)]
    pub gold: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// JSONL with `claim` and `context` per line (optional `id`, `triple`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Write explanations here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Explanations JSONL written by `evaluate` or `predict`.
    #[arg(long)]
    pub input: PathBuf,
    /// Gold corpus file or split directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_stage(s: &str) -> Result<StageId, String> {
    s.parse()
}
