//! Series ingestion (WAV PCM16, CSV, raw little-endian f64) and writers.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use snrsub_core::TimeSeries;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Wav16,
    Csv,
    #[value(name = "raw_f64le", alias = "raw")]
    RawF64le,
}

impl InputFormat {
    /// Guess from the file extension; anything unrecognized is raw.
    pub fn from_path(path: &Path) -> Self {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("wav") => InputFormat::Wav16,
            Some("csv") | Some("txt") => InputFormat::Csv,
            _ => InputFormat::RawF64le,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDescriptor {
    pub path: PathBuf,
    pub format: InputFormat,
    /// Required for CSV and raw input; overrides the WAV header rate.
    pub sample_rate_hz: Option<f64>,
    /// Channel read from a multi-channel WAV file.
    pub channel: usize,
}

fn require_fs(desc: &InputDescriptor) -> CliResult<f64> {
    desc.sample_rate_hz.ok_or_else(|| {
        CliError::Usage(format!(
            "--fs is required for {} input",
            match desc.format {
                InputFormat::Csv => "csv",
                _ => "raw_f64le",
            }
        ))
    })
}

fn series(samples: Vec<f64>, fs: f64, path: &Path) -> CliResult<TimeSeries> {
    if samples.is_empty() {
        return Err(CliError::Input(format!("{}: no samples", path.display())));
    }
    Ok(TimeSeries::new(samples, fs)?)
}

pub fn read_input(desc: &InputDescriptor) -> CliResult<TimeSeries> {
    let path = desc.path.as_path();
    match desc.format {
        InputFormat::Wav16 => {
            let (samples, header_fs) = read_wav16(path, desc.channel)?;
            series(samples, desc.sample_rate_hz.unwrap_or(header_fs), path)
        }
        InputFormat::Csv => {
            let fs = require_fs(desc)?;
            let file = File::open(path).map_err(|e| CliError::io(path, e))?;
            series(parse_csv(file, path)?, fs, path)
        }
        InputFormat::RawF64le => {
            let fs = require_fs(desc)?;
            let mut bytes = Vec::new();
            File::open(path)
                .and_then(|mut f| f.read_to_end(&mut bytes))
                .map_err(|e| CliError::io(path, e))?;
            series(decode_f64le(&bytes, path)?, fs, path)
        }
    }
}

/// PCM16 samples of one channel scaled by `1/32768`, and the header rate.
pub fn read_wav16(path: &Path, channel: usize) -> CliResult<(Vec<f64>, f64)> {
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(CliError::Unsupported(format!(
            "{}: only PCM 16-bit WAV is supported, found {:?} {}-bit",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let channels = spec.channels as usize;
    if channel >= channels {
        return Err(CliError::Usage(format!(
            "channel {channel} requested but {} has {channels}",
            path.display()
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .skip(channel)
        .step_by(channels)
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| wav_error(path, e))?;
    Ok((samples, spec.sample_rate as f64))
}

fn wav_error(path: &Path, e: hound::Error) -> CliError {
    match e {
        hound::Error::IoError(io) => CliError::io(path, io),
        other => CliError::Input(format!("{}: {other}", path.display())),
    }
}

/// Last column of every row; a non-numeric first row is taken as a header.
pub fn parse_csv<R: Read>(input: R, path: &Path) -> CliResult<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let Some(cell) = record.iter().rev().find(|c| !c.is_empty()) else {
            continue;
        };
        match cell.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if row == 0 => {}
            Err(_) => {
                return Err(CliError::Input(format!(
                    "{}: row {}: non-numeric cell '{cell}'",
                    path.display(),
                    row + 1
                )))
            }
        }
    }
    Ok(out)
}

pub fn decode_f64le(bytes: &[u8], path: &Path) -> CliResult<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(CliError::Input(format!(
            "{}: {} bytes is not a whole number of f64 samples",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn write_raw_f64le(path: &Path, samples: &[f64]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        w.write_all(&s.to_le_bytes())
            .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Mono PCM16 file. Returns how many samples were clipped to the 16-bit
/// range.
pub fn write_wav16(path: &Path, samples: &[f64], sample_rate_hz: f64) -> CliResult<usize> {
    if sample_rate_hz.fract() != 0.0 || !(1.0..=u32::MAX as f64).contains(&sample_rate_hz) {
        return Err(CliError::Usage(format!(
            "WAV output needs an integer sample rate, got {sample_rate_hz}"
        )));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    let mut clipped = 0;
    for &s in samples {
        let v = (s * 32768.0).round();
        if !(-32768.0..=32767.0).contains(&v) {
            clipped += 1;
        }
        writer
            .write_sample(v.clamp(-32768.0, 32767.0) as i16)
            .map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))?;
    Ok(clipped)
}
