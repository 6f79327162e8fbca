use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const VARIANT_HELP: &str = "\
Variant shorthand: kind[:param[,param]][@base], stacked with '+'.
  vanilla                  plain rotary embedding at the configured base
  base-scaled:B            rotary base B (alias base:B, base=B)
  linear-pi:L              positions divided by L
  ntk-fixed:A              base multiplied by A
  ntk-dynamic[:R]          base multiplied by 2^(ceil(log2(t/R))+1)-1 beyond R
  log-scaled[:R]           scores multiplied by max(1, log_R t)
  xpos[:G[,R]]             per-pair decay ((G+2n/d)/(G+1))^((t-s)/R), G defaults to 0.4
  truncated:K              keep the first K features, rescale by sqrt(d/K)
  position-clamp:C         clamp positions to C beyond the critical dimension
R defaults to the predicted extrapolation bound for the variant's base.
Examples: ntk-fixed:8, truncated:92, linear-pi:4, base:500+log-scaled";

#[derive(Debug, Parser)]
#[command(
    name = "ropescale",
    version,
    about = "Rotary position embedding scaling laws and attention diagnostics",
    after_help = VARIANT_HELP
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Critical dimension, critical base, pivots and extrapolation bound.
    Predict(CommonArgs),
    /// Per-pair angle, period and coverage at the training length.
    Angles(CommonArgs),
    /// Phase-coverage classes for a context length.
    Coverage(CoverageArgs),
    /// Mean attention scores per relative distance, split at the critical dimension.
    #[command(after_help = VARIANT_HELP)]
    Trace(TraceArgs),
    /// Predicted bounds and in/out-of-bound verdicts for several variants.
    #[command(after_help = VARIANT_HELP)]
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Head dimension (even).
    #[arg(long = "d", value_name = "D")]
    pub head_dim: Option<usize>,
    /// Rotary base.
    #[arg(long)]
    pub base: Option<f64>,
    /// Training context length in tokens.
    #[arg(long)]
    pub train_len: Option<u64>,
    /// Fine-tuning context length in tokens (defaults to --train-len).
    #[arg(long)]
    pub tune_len: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Context length to classify against (defaults to the training length).
    #[arg(long)]
    pub context_len: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Variant stack to score.
    #[arg(long)]
    pub variant: Option<String>,
    /// Largest relative distance scored.
    #[arg(long)]
    pub max_len: Option<u64>,
    /// Step between scored distances.
    #[arg(long)]
    pub stride: Option<u64>,
    /// Probe seed; 0 selects the all-ones probe.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Query/key samples per distance.
    #[arg(long = "samples")]
    pub sample_count: Option<usize>,
    /// Worker threads for evaluating distances.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Variant stacks, one per row.
    #[arg(long, num_args = 1.., value_name = "VARIANT")]
    pub variants: Vec<String>,
    /// Context lengths, one per column; accepts K/M suffixes (x1000).
    #[arg(long, num_args = 1.., value_delimiter = ',', value_name = "LEN")]
    pub lengths: Vec<String>,
}
