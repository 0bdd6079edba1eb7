//! Monte Carlo experiments on the synthetic designs: signal-power MSE,
//! oracle quantiles of the block SNR statistic, and quantile MAE.
//!
//! Every replica owns seeds derived from the master seed and its index,
//! and per-cell aggregates are summed in replica order, so reports are
//! bit-stable for any thread count.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::simgen::{derive_seed, gen_design, stream_rng, Design, DesignSpec};
use crate::smoother::mean_and_se;
use crate::stats::{quantile_sorted, variance};
use crate::subsample::{
    block_estimate, default_b1, estimate_snr_distribution, SnrDistribution, SubsampleConfig,
};
use crate::types::{QuantileLevel, SnrDb, TimeSeries};

/// Stream offsets keep data, block-draw and oracle seeds disjoint.
const BLOCK_STREAM: u64 = 1 << 40;
const ORACLE_STREAM: u64 = 2 << 40;

/// Oracle blocks taken from each simulated noise realization.
const ORACLE_BLOCKS_PER_REALIZATION: usize = 500;

pub const DEFAULT_LEVELS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub design: Design,
    pub true_snr: SnrDb,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub noise_variance: f64,
    pub block_sizes: Vec<usize>,
    pub k_blocks: usize,
    pub replicas: usize,
    pub seed: u64,
    pub levels: Vec<f64>,
    /// Monte Carlo draws behind each oracle quantile.
    pub oracle_draws: usize,
}

impl ExperimentSpec {
    /// Desk-scale defaults: 3 s at 44.1 kHz, `b` of 10 and 15 ms, `K = 200`,
    /// 100 replicas.
    pub fn desk(design: Design, true_snr_db: f64) -> Self {
        Self {
            design,
            true_snr: SnrDb(true_snr_db),
            sample_rate_hz: 44100.0,
            duration_s: 3.0,
            noise_variance: 1.0,
            block_sizes: vec![441, 662],
            k_blocks: 200,
            replicas: 100,
            seed: 0,
            levels: DEFAULT_LEVELS.to_vec(),
            oracle_draws: 20_000,
        }
    }

    pub fn design_spec(&self) -> DesignSpec {
        DesignSpec {
            noise_variance: self.noise_variance,
            ..DesignSpec::new(
                self.design,
                self.true_snr.0,
                self.sample_rate_hz,
                self.duration_s,
            )
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(invalid("need at least one replica"));
        }
        if self.block_sizes.is_empty() {
            return Err(invalid("need at least one block size"));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("quantile levels must be strictly increasing"));
        }
        for &l in &self.levels {
            QuantileLevel::new(l)?;
        }
        let n = self.design_spec().n()?;
        for &b in &self.block_sizes {
            SubsampleConfig::new(b, self.k_blocks, 0).validate(n)?;
        }
        Ok(())
    }

    pub fn data_seed(&self, replica: usize) -> u64 {
        derive_seed(self.seed, replica as u64)
    }

    pub fn block_seed(&self, replica: usize) -> u64 {
        derive_seed(self.seed, BLOCK_STREAM + replica as u64)
    }

    pub fn oracle_seed(&self, b: usize) -> u64 {
        derive_seed(self.seed, ORACLE_STREAM + b as u64)
    }
}

/// What one replica produced at one block length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub replica: usize,
    pub b: usize,
    /// Mean over blocks of `(Û − A²/2)²`.
    pub mse_power: f64,
    /// Subsample quantiles at the experiment levels.
    pub quantiles: Vec<f64>,
    pub median: f64,
    pub ci90: (f64, f64),
    pub ci95: (f64, f64),
    pub skipped: usize,
}

/// A replica either summarizes its distribution or records why it failed.
pub type ReplicaOutcome = std::result::Result<ReplicaSummary, String>;

/// Raw per-replica outcomes, indexed `[block size][replica]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRun {
    pub spec: ExperimentSpec,
    pub outcomes: Vec<Vec<ReplicaOutcome>>,
}

fn summarize(
    dist: &SnrDistribution,
    replica: usize,
    b: usize,
    true_power: f64,
    levels: &[f64],
) -> Result<ReplicaSummary> {
    let powers: Vec<f64> = dist
        .estimates
        .iter()
        .map(|e| e.u_hat)
        .filter(|u| u.is_finite())
        .collect();
    let mse_power =
        powers.iter().map(|u| (u - true_power).powi(2)).sum::<f64>() / powers.len() as f64;
    let quantiles = levels
        .iter()
        .map(|&l| Ok(dist.quantile(QuantileLevel::new(l)?)?.0))
        .collect::<Result<Vec<_>>>()?;
    let ci = |level| -> Result<(f64, f64)> {
        let (lo, hi) = dist.confidence_interval(level)?;
        Ok((lo.0, hi.0))
    };
    Ok(ReplicaSummary {
        replica,
        b,
        mse_power,
        quantiles,
        median: dist.median()?.0,
        ci90: ci(0.90)?,
        ci95: ci(0.95)?,
        skipped: dist.skipped,
    })
}

/// Simulates every replica once and runs the estimator at every block
/// size on the same realization.
pub fn run_replicas(spec: &ExperimentSpec) -> Result<McRun> {
    spec.validate()?;
    let design = spec.design_spec();
    let true_power = design.signal_power()?;
    let per_replica: Vec<Vec<ReplicaOutcome>> = (0..spec.replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<ReplicaOutcome>> {
            let data = gen_design(&design, spec.data_seed(r))?;
            Ok(spec
                .block_sizes
                .iter()
                .map(|&b| {
                    let cfg = SubsampleConfig::new(b, spec.k_blocks, spec.block_seed(r));
                    estimate_snr_distribution(&data.series, &cfg)
                        .and_then(|d| summarize(&d, r, b, true_power, &spec.levels))
                        .map_err(|e| e.code().to_string())
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let outcomes = (0..spec.block_sizes.len())
        .map(|j| per_replica.iter().map(|row| row[j].clone()).collect())
        .collect();
    Ok(McRun {
        spec: spec.clone(),
        outcomes,
    })
}

/// Mean and standard error of one metric over the replicas of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCell {
    pub design: Design,
    pub snr: f64,
    pub b: usize,
    pub b_ms: f64,
    pub metric: String,
    pub level: Option<f64>,
    /// `None` for an invalid cell.
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub count: usize,
    pub failures: usize,
    pub valid: bool,
    /// Per-replica values in replica order.
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl McCell {
    fn new(spec: &ExperimentSpec, b: usize, metric: &str, level: Option<f64>) -> Self {
        Self {
            design: spec.design,
            snr: spec.true_snr.0,
            b,
            b_ms: b as f64 * 1000.0 / spec.sample_rate_hz,
            metric: metric.to_string(),
            level,
            mean: None,
            se: None,
            count: 0,
            failures: 0,
            valid: false,
            values: vec![],
        }
    }

    fn fill(mut self, values: Vec<f64>, failures: usize) -> Self {
        self.failures = failures;
        self.count = values.len();
        self.valid = failures == 0 && !values.is_empty() && values.iter().all(|v| v.is_finite());
        if self.valid {
            let (m, se) = mean_and_se(&values);
            self.mean = Some(m);
            self.se = Some(se);
        }
        self.values = values;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub metric: String,
    pub spec: ExperimentSpec,
    pub cells: Vec<McCell>,
    /// Comparisons against Monte Carlo oracles are approximate.
    pub approximate: bool,
}

impl McRun {
    pub fn mse_report(&self) -> McReport {
        let cells = self
            .spec
            .block_sizes
            .iter()
            .zip(&self.outcomes)
            .map(|(&b, outs)| {
                let values: Vec<f64> = outs.iter().flatten().map(|s| s.mse_power).collect();
                let failures = outs.len() - values.len();
                McCell::new(&self.spec, b, "mse_power", None).fill(values, failures)
            })
            .collect();
        McReport {
            metric: "mse_power".into(),
            spec: self.spec.clone(),
            cells,
            approximate: false,
        }
    }

    /// `oracles[j]` holds the oracle quantiles for block size `j`.
    pub fn qmae_report(&self, oracles: &[Vec<f64>]) -> McReport {
        let mut cells = vec![];
        for ((&b, outs), oracle) in self
            .spec
            .block_sizes
            .iter()
            .zip(&self.outcomes)
            .zip(oracles)
        {
            for (li, &level) in self.spec.levels.iter().enumerate() {
                let values: Vec<f64> = outs
                    .iter()
                    .flatten()
                    .map(|s| (s.quantiles[li] - oracle[li]).abs())
                    .collect();
                let failures = outs.len() - values.len();
                cells.push(
                    McCell::new(&self.spec, b, "quantile_mae", Some(level)).fill(values, failures),
                );
            }
        }
        McReport {
            metric: "quantile_mae".into(),
            spec: self.spec.clone(),
            cells,
            approximate: true,
        }
    }
}

/// Monte Carlo averages of the signal-power MSE per block size.
pub fn mse_signal_power(spec: &ExperimentSpec) -> Result<McReport> {
    Ok(run_replicas(spec)?.mse_report())
}

/// Quantiles of the block statistic with the true signal and noise.
///
/// Independent noise realizations of the full design are simulated and
/// blocks are drawn from each; per block the statistic is
/// `10·log10(mean s² over the b points / variance of ε over the first b₁)`.
pub fn oracle_quantiles(
    design: &DesignSpec,
    b: usize,
    b1: usize,
    levels: &[f64],
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if draws == 0 {
        return Err(invalid("oracle needs at least one draw"));
    }
    let n = design.n()?;
    if b > n || b1 == 0 || b1 > b {
        return Err(invalid(format!(
            "invalid oracle block b = {b}, b1 = {b1} for n = {n}"
        )));
    }
    let signal = crate::simgen::gen_sine(&design.signal_spec()?)?;
    let noise = design.noise();
    let per = ORACLE_BLOCKS_PER_REALIZATION.min(n - b + 1);
    let realizations = draws.div_ceil(per);
    let mut stats: Vec<f64> = (0..realizations)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let eps = match noise {
                Some(spec) => spec.generate(n, derive_seed(seed, r as u64))?,
                None => vec![0.0; n],
            };
            let take = per.min(draws - r * per);
            let mut rng = stream_rng(seed, BLOCK_STREAM + r as u64);
            Ok(index::sample(&mut rng, n - b + 1, take)
                .into_iter()
                .map(|t| {
                    let s = &signal.samples()[t..t + b];
                    let p = s.iter().map(|v| v * v).sum::<f64>() / b as f64;
                    10.0 * (p / variance(&eps[t..t + b1])).log10()
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    stats.sort_by(f64::total_cmp);
    levels
        .iter()
        .map(|&l| Ok(quantile_sorted(&stats, QuantileLevel::new(l)?)))
        .collect()
}

/// Oracle quantiles for every block size of an experiment.
pub fn experiment_oracles(spec: &ExperimentSpec) -> Result<Vec<Vec<f64>>> {
    let design = spec.design_spec();
    spec.block_sizes
        .iter()
        .map(|&b| {
            oracle_quantiles(
                &design,
                b,
                default_b1(b),
                &spec.levels,
                spec.oracle_draws,
                spec.oracle_seed(b),
            )
        })
        .collect()
}

/// Mean absolute deviation of estimated from oracle quantiles, per block
/// size and level, in dB.
pub fn quantile_mae(spec: &ExperimentSpec) -> Result<McReport> {
    let oracles = experiment_oracles(spec)?;
    Ok(run_replicas(spec)?.qmae_report(&oracles))
}

/// Randomized and exhaustive subsample distributions on a short series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveCheck {
    /// Sorted valid SNR values from the randomized procedure.
    pub randomized: Vec<f64>,
    /// Sorted valid SNR values over every admissible start.
    pub exhaustive: Vec<f64>,
    pub identical: bool,
    pub within_envelope: bool,
    pub ks_distance: f64,
}

/// Largest series length accepted by [`exhaustive_subsample_check`].
pub const MAX_EXHAUSTIVE_LEN: usize = 512;

/// Compares `k_blocks` randomized blocks with the full enumeration of
/// all `n − b + 1` blocks.
pub fn exhaustive_subsample_check(
    series: &TimeSeries,
    b: usize,
    b1: usize,
    k_blocks: usize,
    seed: u64,
) -> Result<ExhaustiveCheck> {
    let n = series.len();
    if n > MAX_EXHAUSTIVE_LEN {
        return Err(invalid(format!(
            "exhaustive check limited to n <= {MAX_EXHAUSTIVE_LEN}, got {n}"
        )));
    }
    let cfg = SubsampleConfig::new(b, k_blocks, seed).with_b1(b1);
    cfg.validate(n)?;
    let randomized = estimate_snr_distribution(series, &cfg)?.values().to_vec();
    let mut exhaustive = (0..=n - b)
        .map(|t| block_estimate(series, t, &cfg).map(|e| e.snr.map(|s| s.0)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    exhaustive.sort_by(f64::total_cmp);
    let within_envelope = match (exhaustive.first(), exhaustive.last()) {
        (Some(lo), Some(hi)) => randomized.iter().all(|v| v >= lo && v <= hi),
        _ => randomized.is_empty(),
    };
    Ok(ExhaustiveCheck {
        identical: randomized == exhaustive,
        within_envelope,
        ks_distance: ks_distance(&randomized, &exhaustive),
        randomized,
        exhaustive,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic of sorted samples.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::gen_ar1;

    fn tiny_series(seed: u64) -> TimeSeries {
        let n = 64;
        let noise = gen_ar1(-0.7, 1.0, n, seed).unwrap();
        let s = (0..n)
            .map(|i| 3.0 * (2.0 * std::f64::consts::PI * i as f64 / 40.0).sin() + noise[i])
            .collect();
        TimeSeries::new(s, 1000.0).unwrap()
    }

    #[test]
    fn exhaustive_equivalence() {
        let series = tiny_series(1);
        let full = exhaustive_subsample_check(&series, 16, 4, 49, 3).unwrap();
        assert!(full.identical);
        assert_eq!(full.ks_distance, 0.0);
        let other = exhaustive_subsample_check(&series, 16, 4, 49, 4).unwrap();
        assert_eq!(full.randomized, other.randomized);

        let part = exhaustive_subsample_check(&series, 16, 4, 25, 3).unwrap();
        assert!(part.within_envelope);
        assert_eq!(part.randomized.len(), 25);
    }

    #[test]
    fn ks_shrinks_with_more_blocks() {
        let series = tiny_series(2);
        let mean_ks = |k: usize| {
            (0..20)
                .map(|s| {
                    exhaustive_subsample_check(&series, 16, 4, k, s)
                        .unwrap()
                        .ks_distance
                })
                .sum::<f64>()
                / 20.0
        };
        let d: Vec<f64> = [5, 15, 35].into_iter().map(mean_ks).collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    }

    #[test]
    fn ks_basics() {
        assert_eq!(ks_distance(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_distance(&[1.0], &[2.0]), 1.0);
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0]), 0.5);
    }

    #[test]
    fn standard_error_formula() {
        let values = vec![1.0, 2.0, 4.0, 7.0];
        let cell = McCell::new(&ExperimentSpec::desk(Design::Ar, 6.0), 441, "x", None)
            .fill(values.clone(), 0);
        let m = 3.5;
        let sd = (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 3.0).sqrt();
        assert_eq!(cell.mean, Some(m));
        assert!((cell.se.unwrap() - sd / 2.0).abs() < 1e-15);
        let single =
            McCell::new(&ExperimentSpec::desk(Design::Ar, 6.0), 441, "x", None).fill(vec![2.0], 0);
        assert_eq!(single.se, Some(0.0));
    }

    #[test]
    fn cell_mean_is_order_insensitive() {
        let values: Vec<f64> = (0..100).map(|i| ((i * 37 % 101) as f64).sqrt()).collect();
        let mut shuffled = values.clone();
        shuffled.reverse();
        shuffled.rotate_left(17);
        let (a, sa) = mean_and_se(&values);
        let (b, sb) = mean_and_se(&shuffled);
        assert!((a - b).abs() <= 1e-12 * a.abs());
        assert!((sa - sb).abs() <= 1e-12 * sa.abs());
    }

    fn small_spec(design: Design) -> ExperimentSpec {
        ExperimentSpec {
            duration_s: 0.5,
            k_blocks: 30,
            replicas: 4,
            oracle_draws: 2000,
            ..ExperimentSpec::desk(design, 10.0)
        }
    }

    #[test]
    fn reports_have_one_cell_per_setting() {
        let spec = small_spec(Design::Ar);
        let run = run_replicas(&spec).unwrap();
        let mse = run.mse_report();
        assert_eq!(mse.cells.len(), 2);
        assert!(mse.cells.iter().all(|c| c.valid && c.count == 4));
        let oracles = experiment_oracles(&spec).unwrap();
        let q = run.qmae_report(&oracles);
        assert_eq!(q.cells.len(), 10);
        assert!(q.approximate);
    }

    #[test]
    fn single_replica_has_zero_se() {
        let spec = ExperimentSpec {
            replicas: 1,
            ..small_spec(Design::Ar)
        };
        let r = mse_signal_power(&spec).unwrap();
        assert!(r.cells.iter().all(|c| c.se == Some(0.0)));
    }

    #[test]
    fn replicas_are_thread_count_independent() {
        let spec = small_spec(Design::P1);
        let pool = |t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
        };
        let a = pool(1).install(|| run_replicas(&spec).unwrap());
        let b = pool(3).install(|| run_replicas(&spec).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn oracle_median_near_truth() {
        let design = DesignSpec::new(Design::Ar, 10.0, 44100.0, 3.0);
        let q = oracle_quantiles(&design, 441, 11, &[0.5], 5000, 1).unwrap();
        assert!((q[0] - 10.0).abs() < 1.0, "{q:?}");
    }

    #[test]
    fn oracle_noiseless_limit() {
        let design = DesignSpec {
            noise_variance: 1e-30,
            ..DesignSpec::new(Design::Ar, 10.0, 44100.0, 0.5)
        };
        let design = DesignSpec {
            amplitude: Some(1.0),
            ..design
        };
        let q = oracle_quantiles(&design, 441, 11, &[0.1, 0.9], 1000, 1).unwrap();
        assert!(q.iter().all(|&v| v > 200.0), "{q:?}");
    }

    #[test]
    fn zero_noise_design_is_invalid_cell() {
        let spec = ExperimentSpec {
            design: Design::SineOnly,
            ..small_spec(Design::SineOnly)
        };
        let r = quantile_mae(&spec).unwrap();
        assert!(r.cells.iter().all(|c| !c.valid && c.mean.is_none()));
    }
}
