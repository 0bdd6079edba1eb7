use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use snrsub_core::harness::{experiment_oracles, run_replicas, ExperimentSpec, McReport};
use snrsub_core::subsample::{BandwidthMode, BlockCandidate};
use snrsub_core::{
    estimate_snr_distribution, gen_design, ms_to_samples, select_bandwidth, select_block_size,
    DependenceRegime, DesignSpec, NoiseSpec, QuantileLevel, SubsampleConfig, TimeSeries,
};

use crate::args::{
    BandwidthArgs, EstimateArgs, GridUnit, McArgs, McMetric, OutputFormat, SelectBlockArgs,
    SimulateArgs,
};
use crate::error::{CliError, CliResult};
use crate::io::{read_input, write_raw_f64le, write_wav16, InputDescriptor, InputFormat};

pub const SCHEMA_VERSION: u32 = 1;

/// Writes to `path`, or to stdout when `None`.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => File::create(p)
            .and_then(|mut f| f.write_all(bytes))
            .map_err(|e| CliError::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn regime(lrd_gamma: Option<f64>) -> CliResult<Option<DependenceRegime>> {
    Ok(lrd_gamma.map(DependenceRegime::lrd).transpose()?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputSummary {
    pub path: String,
    pub format: InputFormat,
    pub channel: usize,
    pub sample_rate_hz: f64,
    pub n: usize,
}

impl InputSummary {
    fn new(desc: &InputDescriptor, series: &TimeSeries) -> Self {
        Self {
            path: desc.path.display().to_string(),
            format: desc.format,
            channel: desc.channel,
            sample_rate_hz: series.sample_rate_hz(),
            n: series.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileRow {
    pub level: f64,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRow {
    pub level: f64,
    pub lower_db: f64,
    pub upper_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub read_s: f64,
    pub estimate_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub input: InputSummary,
    pub config: SubsampleConfig,
    pub n: usize,
    pub fs: f64,
    pub b: usize,
    pub b1: usize,
    pub k: usize,
    pub seed: u64,
    pub valid: usize,
    pub skipped: usize,
    /// Median of the per-block CV bandwidths.
    pub median_h_hat: Option<f64>,
    pub quantiles: Vec<QuantileRow>,
    pub intervals: Vec<IntervalRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

pub fn estimate(args: &EstimateArgs) -> CliResult<RunReport> {
    let clock = Instant::now();
    let desc = args.input.descriptor();
    let series = read_input(&desc)?;
    let read_s = clock.elapsed().as_secs_f64();
    let fs = series.sample_rate_hz();
    let b = args.block.resolve(fs)?.ok_or_else(|| {
        CliError::Usage("one of --block-ms, --block-samples, --block-s is required".into())
    })?;
    let mut cfg = SubsampleConfig::new(b, args.k, args.seed);
    if let Some(b1) = args.b1 {
        cfg = cfg.with_b1(b1);
    }
    cfg.regime_hint = regime(args.lrd_gamma)?;
    if args.shared_bandwidth {
        cfg.bandwidth_mode = BandwidthMode::Shared;
    }

    let dist = estimate_snr_distribution(&series, &cfg)?;
    if let Some(path) = &args.values_csv {
        write_values_csv(path, &dist.estimates)?;
    }
    let quantiles = args
        .levels
        .iter()
        .map(|&level| {
            Ok(QuantileRow {
                level,
                snr_db: dist.quantile(QuantileLevel::new(level)?)?.0,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let intervals = args
        .ci
        .iter()
        .map(|&level| {
            let (lo, hi) = dist.confidence_interval(level)?;
            Ok(IntervalRow {
                level,
                lower_db: lo.0,
                upper_db: hi.0,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let estimate_s = clock.elapsed().as_secs_f64() - read_s;
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        command: "estimate".into(),
        input: InputSummary::new(&desc, &series),
        n: series.len(),
        fs,
        b: cfg.b,
        b1: cfg.b1,
        k: cfg.k_blocks,
        seed: cfg.seed,
        valid: dist.len(),
        skipped: dist.skipped,
        median_h_hat: dist.median_bandwidth(),
        quantiles,
        intervals,
        timings: args.timings.then_some(Timings { read_s, estimate_s }),
        config: cfg,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn write_values_csv(path: &Path, estimates: &[snrsub_core::SubsampleEstimate]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["start", "u_hat", "v_hat", "h_hat", "snr_db"])
        .map_err(|e| csv_error(path, e))?;
    for e in estimates {
        let snr = e.snr.map(|s| s.0.to_string()).unwrap_or_default();
        w.write_record([
            e.start.to_string(),
            e.u_hat.to_string(),
            e.v_hat.to_string(),
            e.h_hat.to_string(),
            snr,
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationManifest {
    pub schema_version: u32,
    pub command: String,
    pub design: DesignSpec,
    pub seed: u64,
    pub amplitude: f64,
    pub noise: Option<NoiseSpec>,
    pub signal_power: f64,
    pub true_snr_db: Option<f64>,
    pub n: usize,
    pub sample_rate_hz: f64,
    pub output: String,
    pub format: String,
    /// Samples clipped to the 16-bit range (WAV output only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clipped: Option<usize>,
}

pub fn simulate(args: &SimulateArgs) -> CliResult<SimulationManifest> {
    let spec = DesignSpec {
        noise_variance: args.noise_variance,
        frequency_hz: args.frequency,
        amplitude: args.amplitude,
        ..DesignSpec::new(args.design, args.snr, args.fs, args.duration)
    };
    let data = gen_design(&spec, args.seed)?;
    let samples = data.series.samples();
    let (format, clipped) = match args.format {
        OutputFormat::RawF64le => {
            write_raw_f64le(&args.out, samples)?;
            ("raw_f64le", None)
        }
        OutputFormat::Wav16 => ("wav16", Some(write_wav16(&args.out, samples, args.fs)?)),
    };
    let manifest = SimulationManifest {
        schema_version: SCHEMA_VERSION,
        command: "simulate".into(),
        design: spec,
        seed: args.seed,
        amplitude: data.amplitude,
        noise: spec.noise(),
        signal_power: spec.signal_power()?,
        true_snr_db: spec.true_snr()?.map(|s| s.0),
        n: samples.len(),
        sample_rate_hz: args.fs,
        output: args.out.display().to_string(),
        format: format.into(),
        clipped,
    };
    let manifest_path = args.manifest.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".json");
        p.into()
    });
    emit(Some(&manifest_path), to_json(&manifest).as_bytes())?;
    Ok(manifest)
}

/// Equispaced grid converted to samples.
pub fn block_grid(
    min: f64,
    max: f64,
    steps: usize,
    unit: GridUnit,
    fs: f64,
) -> CliResult<Vec<usize>> {
    if steps < 2 || !(min > 0.0 && min < max) {
        return Err(CliError::Usage(format!(
            "block grid needs 0 < min < max and at least 2 steps, got {min}..{max} in {steps}"
        )));
    }
    let grid: Vec<usize> = (0..steps)
        .map(|j| {
            let v = min + (max - min) * j as f64 / (steps - 1) as f64;
            match unit {
                GridUnit::Ms => ms_to_samples(v, fs),
                GridUnit::S => ms_to_samples(v * 1000.0, fs),
                GridUnit::Samples => v.round() as usize,
            }
        })
        .collect();
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage(format!(
            "block grid collapses to repeated lengths {grid:?}; use fewer steps"
        )));
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectBlockReport {
    pub schema_version: u32,
    pub command: String,
    pub input: InputSummary,
    pub grid_samples: Vec<usize>,
    pub k: usize,
    pub seed: u64,
    pub chosen_b: usize,
    pub chosen_ms: f64,
    pub candidates: Vec<BlockCandidate>,
}

pub fn select_block(args: &SelectBlockArgs) -> CliResult<SelectBlockReport> {
    let desc = args.input.descriptor();
    let series = read_input(&desc)?;
    let fs = series.sample_rate_hz();
    let grid = block_grid(
        args.grid_min,
        args.grid_max,
        args.grid_steps,
        args.grid_unit,
        fs,
    )?;
    let template = SubsampleConfig::new(grid[0], args.k, args.seed);
    let sel = select_block_size(&series, &grid, &template)?;
    Ok(SelectBlockReport {
        schema_version: SCHEMA_VERSION,
        command: "select-block".into(),
        input: InputSummary::new(&desc, &series),
        grid_samples: grid,
        k: args.k,
        seed: args.seed,
        chosen_b: sel.chosen_b,
        chosen_ms: sel.chosen_b as f64 * 1000.0 / fs,
        candidates: sel.candidates,
    })
}

pub fn select_block_csv(report: &SelectBlockReport) -> CliResult<String> {
    let fs = report.input.sample_rate_hz;
    let mut w = csv::Writer::from_writer(vec![]);
    let err = |e: csv::Error| CliError::Input(e.to_string());
    w.write_record([
        "b",
        "b_ms",
        "b1",
        "q05_db",
        "q95_db",
        "volatility",
        "skipped",
        "chosen",
    ])
    .map_err(err)?;
    for c in &report.candidates {
        w.write_record([
            c.b.to_string(),
            (c.b as f64 * 1000.0 / fs).to_string(),
            c.b1.to_string(),
            c.quantiles[0].to_string(),
            c.quantiles[1].to_string(),
            c.volatility.map(|v| v.to_string()).unwrap_or_default(),
            c.skipped.to_string(),
            (c.b == report.chosen_b).to_string(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McOutput {
    pub schema_version: u32,
    pub command: String,
    pub spec: ExperimentSpec,
    pub reports: Vec<McReport>,
}

pub fn mc_spec(args: &McArgs) -> CliResult<ExperimentSpec> {
    let mut spec = ExperimentSpec::desk(args.design, args.snr);
    spec.sample_rate_hz = args.fs;
    spec.seed = args.seed;
    if args.quick {
        spec.replicas = 10;
        spec.oracle_draws = 2_000;
    }
    if args.long {
        spec.duration_s = 30.0;
        spec.replicas = 500;
    }
    if let Some(r) = args.replicas {
        spec.replicas = r;
    }
    if let Some(k) = args.k {
        spec.k_blocks = k;
    }
    if let Some(d) = args.duration {
        spec.duration_s = d;
    }
    if let Some(o) = args.oracle_draws {
        spec.oracle_draws = o;
    }
    spec.block_sizes = args
        .block_ms
        .iter()
        .map(|&ms| ms_to_samples(ms, args.fs))
        .collect();
    spec.validate()?;
    Ok(spec)
}

pub fn mc(args: &McArgs) -> CliResult<McOutput> {
    let spec = mc_spec(args)?;
    let run = run_replicas(&spec)?;
    let mut reports = Vec::new();
    if args.metric != McMetric::Qmae {
        reports.push(run.mse_report());
    }
    if args.metric != McMetric::Mse {
        let oracles = experiment_oracles(&spec)?;
        reports.push(run.qmae_report(&oracles));
    }
    Ok(McOutput {
        schema_version: SCHEMA_VERSION,
        command: "mc".into(),
        spec,
        reports,
    })
}

pub fn mc_csv(out: &McOutput) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(vec![]);
    let err = |e: csv::Error| CliError::Input(e.to_string());
    w.write_record([
        "design", "snr", "b", "b_ms", "metric", "level", "mean", "se", "count", "failures", "valid",
    ])
    .map_err(err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in out.reports.iter().flat_map(|r| &r.cells) {
        w.write_record([
            c.design.to_string(),
            c.snr.to_string(),
            c.b.to_string(),
            c.b_ms.to_string(),
            c.metric.clone(),
            opt(c.level),
            opt(c.mean),
            opt(c.se),
            c.count.to_string(),
            c.failures.to_string(),
            c.valid.to_string(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// `(h, CV(h), selected)` rows of one block.
pub fn bandwidth(args: &BandwidthArgs) -> CliResult<Vec<(f64, f64, bool)>> {
    let series = read_input(&args.input.descriptor())?;
    let n = series.len();
    let b = args
        .block
        .resolve(series.sample_rate_hz())?
        .unwrap_or(n - args.start.min(n));
    let end = args
        .start
        .checked_add(b)
        .filter(|&e| e <= n)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "block {}..{}+{b} exceeds n = {n}",
                args.start, args.start
            ))
        })?;
    let block = &series.samples()[args.start..end];
    let fit = select_bandwidth(block, regime(args.lrd_gamma)?, &Default::default())?;
    Ok(fit
        .cv_curve
        .iter()
        .map(|&(h, cv)| (h, cv, h == fit.h_hat))
        .collect())
}

pub fn bandwidth_csv(rows: &[(f64, f64, bool)]) -> String {
    let mut s = String::from("h,cv,selected\n");
    for (h, cv, sel) in rows {
        s.push_str(&format!("{h},{cv},{sel}\n"));
    }
    s
}
