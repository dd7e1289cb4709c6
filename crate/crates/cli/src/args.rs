use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use streamwrap::ResamplerKind;

#[derive(Debug, Parser)]
#[command(name = "streamwrap", version, about = "Run fixed-shape audio processors under arbitrary host settings")]
pub struct Cli {
    /// Seed for every random choice; echoed in output headers.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Process a WAV file through the wrapper and write the delay-trimmed result.
    Render(RenderArgs),
    /// Drive the wrapper through a host callback schedule.
    Simulate(SimulateArgs),
    /// Reported delay for every (rate pair, model size, host size).
    DelayTable(DelayTableArgs),
    /// Real-time factor, latency, or allocation audit per (rate, size).
    Bench(BenchArgs),
    /// Validate a bundle and list its contents.
    Inspect(InspectArgs),
    /// Write a bundle for a built-in processor.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Kernel {
    Linear,
    #[default]
    Hermite,
}

impl From<Kernel> for ResamplerKind {
    fn from(k: Kernel) -> Self {
        match k {
            Kernel::Linear => ResamplerKind::Linear,
            Kernel::Hermite => ResamplerKind::Hermite,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProcessorArgs {
    /// identity, gain, clipper, delayline:<frames> or tcn:<seed>.
    #[arg(long, conflicts_with = "bundle")]
    pub builtin: Option<String>,
    /// Load the processor from a bundle file.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Restrict the processor to these block sizes.
    #[arg(long, value_delimiter = ',')]
    pub model_sizes: Vec<usize>,
    /// Restrict the processor to these sample rates.
    #[arg(long, value_delimiter = ',')]
    pub model_rates: Vec<u32>,
    #[arg(long, value_enum, default_value = "hermite")]
    pub resampler: Kernel,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub processor: ProcessorArgs,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "out")]
    pub output: PathBuf,
    /// Host rate; the input is converted to it first if it differs.
    #[arg(long)]
    pub rate: Option<u32>,
    #[arg(long, default_value_t = 512)]
    pub buffer: usize,
    /// `name=value`; categorical values may be a label or an index.
    #[arg(long = "param")]
    pub params: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub processor: ProcessorArgs,
    #[arg(long, default_value_t = 48000)]
    pub rate: u32,
    #[arg(long, default_value_t = 2)]
    pub channels: usize,
    /// Fixed host buffer size.
    #[arg(long, conflicts_with_all = ["random_walk", "script"])]
    pub buffer: Option<usize>,
    /// `MIN:MAX` random walk over host buffer sizes.
    #[arg(long, conflicts_with = "script")]
    pub random_walk: Option<String>,
    /// Comma-separated host buffer sizes, repeated cyclically.
    #[arg(long, value_delimiter = ',')]
    pub script: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1000)]
    pub callbacks: usize,
    /// `CALLBACK:RATE` or `CALLBACK:RATE:SIZE`.
    #[arg(long = "reconfigure")]
    pub reconfigure: Vec<String>,
    /// Check delayed identity (or conservation when resampling).
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct DelayTableArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub model_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub host_sizes: Vec<usize>,
    /// `HOST:MODEL` rate pairs.
    #[arg(long, value_delimiter = ',', default_value = "48000:48000")]
    pub rates: Vec<String>,
    #[arg(long, value_enum, default_value = "hermite")]
    pub resampler: Kernel,
    #[arg(long, value_enum, default_value = "text")]
    pub format: TableFormat,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true)))]
pub struct BenchArgs {
    #[command(flatten)]
    pub processor: ProcessorArgs,
    #[arg(long, group = "mode")]
    pub rtf: bool,
    #[arg(long, group = "mode")]
    pub latency: bool,
    #[arg(long, group = "mode")]
    pub alloc: bool,
    #[arg(long, value_delimiter = ',', default_value = "48000")]
    pub rates: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "512")]
    pub buffers: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Seconds of audio per RTF run.
    #[arg(long, default_value_t = 1.0)]
    pub duration: f64,
    /// Calls per allocation audit.
    #[arg(long, default_value_t = 10_000)]
    pub calls: usize,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub bundle: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// identity, gain, clipper, delayline:<frames> or tcn:<seed>.
    #[arg(long)]
    pub builtin: String,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    #[arg(long, value_delimiter = ',')]
    pub model_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub model_rates: Vec<u32>,
    /// Model name stored in the metadata.
    #[arg(long)]
    pub name: Option<String>,
    /// Input WAV rendered into an example pair; a short sine if absent.
    #[arg(long)]
    pub example: Option<PathBuf>,
    #[arg(long = "out")]
    pub output: PathBuf,
}
