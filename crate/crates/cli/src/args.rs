use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use snrsub_core::{ms_to_samples, Design};

use crate::error::{CliError, CliResult};
use crate::io::{InputDescriptor, InputFormat};

#[derive(Debug, Parser)]
#[command(
    name = "snrsub",
    version,
    about = "SNR distribution and confidence intervals by block subsampling"
)]
pub struct Cli {
    /// Worker threads; never changes numeric output.
    #[arg(long, global = true, env = "SNRSUB_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a reference design series plus a JSON manifest.
    Simulate(SimulateArgs),
    /// Estimate the subsample SNR distribution of a series.
    Estimate(EstimateArgs),
    /// Choose the block length by minimum quantile volatility.
    SelectBlock(SelectBlockArgs),
    /// Monte Carlo evaluation on a reference design.
    Mc(McArgs),
    /// Cross-validation curve of one block.
    Bandwidth(BandwidthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[arg(long, short = 'i')]
    pub input: PathBuf,
    /// Defaults from the file extension (.wav, .csv, otherwise raw).
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// Sample rate in Hz; required for csv and raw input.
    #[arg(long)]
    pub fs: Option<f64>,
    /// WAV channel to read.
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
}

impl InputArgs {
    pub fn descriptor(&self) -> InputDescriptor {
        InputDescriptor {
            path: self.input.clone(),
            format: self
                .format
                .unwrap_or_else(|| InputFormat::from_path(&self.input)),
            sample_rate_hz: self.fs,
            channel: self.channel,
        }
    }
}

#[derive(Debug, Clone, Args)]
#[group(multiple = false)]
pub struct BlockArgs {
    #[arg(long)]
    pub block_ms: Option<f64>,
    #[arg(long)]
    pub block_samples: Option<usize>,
    /// Block length in seconds, for slowly sampled data.
    #[arg(long)]
    pub block_s: Option<f64>,
}

impl BlockArgs {
    pub fn resolve(&self, fs: f64) -> CliResult<Option<usize>> {
        let ms = match (self.block_samples, self.block_ms, self.block_s) {
            (Some(b), _, _) => return Ok(Some(b)),
            (_, Some(ms), _) => ms,
            (_, _, Some(s)) => s * 1000.0,
            _ => return Ok(None),
        };
        if !(ms > 0.0 && ms.is_finite()) {
            return Err(CliError::Usage(format!(
                "block length must be positive, got {ms} ms"
            )));
        }
        Ok(Some(ms_to_samples(ms, fs)))
    }
}

fn parse_design(s: &str) -> Result<Design, String> {
    s.parse().map_err(|e: snrsub_core::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    #[value(name = "raw_f64le", alias = "raw")]
    RawF64le,
    Wav16,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_design)]
    pub design: Design,
    /// Target SNR in dB.
    #[arg(long, default_value_t = 10.0)]
    pub snr: f64,
    #[arg(long, default_value_t = 44100.0)]
    pub fs: f64,
    /// Duration in seconds.
    #[arg(long, default_value_t = 3.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_variance: f64,
    #[arg(long, default_value_t = 50.0)]
    pub frequency: f64,
    /// Fixed sine amplitude instead of SNR calibration.
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "raw_f64le")]
    pub format: OutputFormat,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the output path with ".json" appended.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub block: BlockArgs,
    /// Noise-variance window; defaults to max(⌊b^0.4⌋, 4).
    #[arg(long)]
    pub b1: Option<usize>,
    /// Number of blocks.
    #[arg(long, default_value_t = 200)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.25, 0.5, 0.75, 0.9])]
    pub levels: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.9, 0.95])]
    pub ci: Vec<f64>,
    /// Long-memory exponent hint for the bandwidth grid.
    #[arg(long)]
    pub lrd_gamma: Option<f64>,
    /// Select one bandwidth on the first block and reuse it.
    #[arg(long)]
    pub shared_bandwidth: bool,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of the per-block statistics in draw order.
    #[arg(long)]
    pub values_csv: Option<PathBuf>,
    /// Add wall-clock timings to the report (makes it run-dependent).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridUnit {
    Ms,
    S,
    Samples,
}

#[derive(Debug, Clone, Args)]
pub struct SelectBlockArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 2.0)]
    pub grid_min: f64,
    #[arg(long, default_value_t = 20.0)]
    pub grid_max: f64,
    #[arg(long, default_value_t = 10)]
    pub grid_steps: usize,
    #[arg(long, value_enum, default_value = "ms")]
    pub grid_unit: GridUnit,
    #[arg(long, default_value_t = 200)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV table path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum McMetric {
    Mse,
    Qmae,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    #[arg(long, value_parser = parse_design)]
    pub design: Design,
    #[arg(long)]
    pub snr: f64,
    /// 10 replicas and 2000 oracle draws.
    #[arg(long, conflicts_with = "long")]
    pub quick: bool,
    /// 30 s series and 500 replicas.
    #[arg(long)]
    pub long: bool,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long, default_value_t = 44100.0)]
    pub fs: f64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![10.0, 15.0])]
    pub block_ms: Vec<f64>,
    #[arg(long)]
    pub oracle_draws: Option<usize>,
    #[arg(long, value_enum, default_value = "all")]
    pub metric: McMetric,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of the report cells.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BandwidthArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Block length; the whole series when absent.
    #[command(flatten)]
    pub block: BlockArgs,
    /// First sample of the block (0-based).
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    #[arg(long)]
    pub lrd_gamma: Option<f64>,
    /// CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
