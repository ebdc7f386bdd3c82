use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hsq_core::{CodebookMethod, SchemeKind, Variant};

#[derive(Debug, Parser)]
#[command(name = "hsq", version, about = "Hyper-sphere gradient quantization toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or inspect codebook files.
    #[command(subcommand)]
    Codebook(CodebookCommand),
    /// Compress a gradient (JSON array) into a binary frame.
    Quantize(QuantizeArgs),
    /// Decode a binary frame back into a gradient (JSON array).
    Decode(DecodeArgs),
    /// Encode/decode randomized frames and check bit-exactness.
    Roundtrip(RoundtripArgs),
    /// Compression ratio against 32-bit floats.
    Ratio(RatioArgs),
    /// Run a federated experiment from a JSON config.
    Simulate(SimulateArgs),
    /// Run the statistical validator suite and print a JSON report.
    Analyze(AnalyzeArgs),
    /// Print a standard HSQ configuration as JSON.
    Preset(PresetArgs),
}

#[derive(Debug, Subcommand)]
pub enum CodebookCommand {
    /// Generate a codebook and write it to a file.
    Gen(CodebookGenArgs),
    /// Print the header and spectrum of a codebook file.
    Info {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct CodebookGenArgs {
    #[arg(long, default_value = "random_gaussian")]
    pub method: CodebookMethod,
    /// Segment length d'.
    #[arg(long)]
    pub dim: usize,
    /// Codeword count m.
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Codebook selection: a file, or regeneration from method and seed.
#[derive(Debug, Args)]
pub struct CodebookSource {
    /// Codebook file; overrides --method/--codebook-seed.
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    #[arg(long, default_value = "random_gaussian")]
    pub method: CodebookMethod,
    #[arg(long, default_value_t = 0)]
    pub codebook_seed: u64,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dprime: usize,
    #[arg(long)]
    pub m: usize,
    /// Pseudo-norm intervals; 0 sends raw 32-bit norms.
    #[arg(long, default_value_t = 0)]
    pub s: u32,
    #[arg(long, default_value = "unbiased")]
    pub variant: Variant,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub source: CodebookSource,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output JSON file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub source: CodebookSource,
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RatioArgs {
    #[arg(long, default_value = "hsq")]
    pub scheme: SchemeKind,
    #[arg(long, default_value_t = 8)]
    pub dprime: usize,
    #[arg(long, default_value_t = 256)]
    pub m: usize,
    /// HSQ pseudo-norm intervals or QSGD levels.
    #[arg(long, default_value_t = 63)]
    pub s: u32,
    /// Gradient length.
    #[arg(long, default_value_t = 1 << 20)]
    pub d: usize,
    /// QSGD bucket size.
    #[arg(long, default_value_t = hsq_core::baselines::QSGD_DEFAULT_BUCKET)]
    pub bucket: usize,
    /// Charge headers, padding, norms and scalers as well.
    #[arg(long)]
    pub include_header: bool,
    /// Print the ratio of every standard configuration instead.
    #[arg(long)]
    pub grid: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON summary destination.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub clients: Option<usize>,
    #[arg(long)]
    pub per_round: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Constant step size, replacing the configured schedule.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub downlink_compressed: Option<bool>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Monte-Carlo draws per statistical check.
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Report destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetKind {
    /// One segment, d' = m = d.
    Extreme,
    /// d' = m = ⌈√d⌉.
    Compact,
    /// d' = m = κ.
    HighPrecision,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    pub kind: PresetKind,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 4)]
    pub kappa: usize,
    #[arg(long, default_value_t = 0)]
    pub codebook_seed: u64,
}
