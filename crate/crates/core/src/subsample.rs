//! Randomized blockwise smoothing and the subsample SNR distribution.
//!
//! `K` block starts are drawn without replacement from the admissible
//! range. On each block of length `b` the signal is smoothed with a
//! CV-selected bandwidth, the signal power `Û` is the mean squared fit
//! over the whole block, and the noise variance `V̂` is the variance of
//! the residuals on the first `b₁` points. The block statistic is
//! `10·log10(Û/V̂)`.
//!
//! Only samples inside drawn blocks are ever read: the series is accessed
//! through [`BlockSource`], one block at a time.

use std::borrow::Cow;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::simgen::stream_rng;
use crate::smoother::{priestley_chao_fit, select_bandwidth, BandwidthGrid, MIN_SELECT_LEN};
use crate::stats::{mean, quantile_sorted, signal_power, snr_db};
use crate::types::{DependenceRegime, QuantileLevel, SnrDb, TimeSeries};

/// Smallest secondary block length.
pub const MIN_B1: usize = 4;

/// Fraction of blocks that may be skipped before estimation fails.
pub const DEFAULT_SKIP_BUDGET: f64 = 0.1;

/// Quantile levels tracked by the block-size selector.
pub const SELECTION_LEVELS: [f64; 2] = [0.05, 0.95];

/// Random access to contiguous blocks of a long series.
pub trait BlockSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples `start..start + len`.
    fn block(&self, start: usize, len: usize) -> Cow<'_, [f64]>;
}

impl BlockSource for TimeSeries {
    fn len(&self) -> usize {
        TimeSeries::len(self)
    }

    fn block(&self, start: usize, len: usize) -> Cow<'_, [f64]> {
        Cow::Borrowed(&self.samples()[start..start + len])
    }
}

impl BlockSource for [f64] {
    fn len(&self) -> usize {
        <[f64]>::len(self)
    }

    fn block(&self, start: usize, len: usize) -> Cow<'_, [f64]> {
        Cow::Borrowed(&self[start..start + len])
    }
}

/// `max(⌊b^{2/5}⌋, 4)`.
pub fn default_b1(b: usize) -> usize {
    (((b as f64).powf(0.4) + 1e-9).floor() as usize).max(MIN_B1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthMode {
    /// CV bandwidth selected independently on every block.
    PerBlock,
    /// CV run once on the first drawn block; its bandwidth is reused.
    /// Faster, but ignores local structure.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    pub b: usize,
    pub b1: usize,
    pub k_blocks: usize,
    pub seed: u64,
    pub grid: BandwidthGrid,
    pub regime_hint: Option<DependenceRegime>,
    pub bandwidth_mode: BandwidthMode,
    pub skip_budget: f64,
}

impl SubsampleConfig {
    pub fn new(b: usize, k_blocks: usize, seed: u64) -> Self {
        Self {
            b,
            b1: default_b1(b),
            k_blocks,
            seed,
            grid: BandwidthGrid::default(),
            regime_hint: None,
            bandwidth_mode: BandwidthMode::PerBlock,
            skip_budget: DEFAULT_SKIP_BUDGET,
        }
    }

    pub fn with_b1(mut self, b1: usize) -> Self {
        self.b1 = b1;
        self
    }

    /// Same settings at a different block length, `b₁` re-derived.
    pub fn with_block(&self, b: usize) -> Self {
        Self {
            b,
            b1: default_b1(b),
            ..self.clone()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.b < MIN_SELECT_LEN {
            return Err(invalid(format!(
                "block length must be at least {MIN_SELECT_LEN}, got {}",
                self.b
            )));
        }
        if self.b > n {
            return Err(invalid(format!(
                "block length {} exceeds series length {n}",
                self.b
            )));
        }
        if self.b1 < MIN_B1 || self.b1 >= self.b {
            return Err(invalid(format!(
                "secondary block length must satisfy {MIN_B1} <= b1 < b, got b1 = {}, b = {}",
                self.b1, self.b
            )));
        }
        if self.k_blocks == 0 {
            return Err(invalid("need at least one block"));
        }
        if self.k_blocks > n - self.b + 1 {
            return Err(Error::TooManyBlocks {
                n,
                b: self.b,
                k: self.k_blocks,
            });
        }
        if !(0.0..1.0).contains(&self.skip_budget) {
            return Err(invalid("skip budget must lie in [0, 1)"));
        }
        Ok(())
    }

    fn skip_limit(&self) -> usize {
        (self.skip_budget * self.k_blocks as f64 + 1e-9).floor() as usize
    }
}

/// `k` distinct zero-based block starts drawn uniformly from
/// `0..=n − b`, in draw order.
pub fn draw_blocks(n: usize, b: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if b == 0 || b > n || k > n - b + 1 {
        return Err(Error::TooManyBlocks { n, b, k });
    }
    let mut rng = stream_rng(seed, 0);
    Ok(index::sample(&mut rng, n - b + 1, k).into_vec())
}

/// Statistics of one block. `snr` is `None` when the block was skipped
/// because `V̂` fell under the positivity floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleEstimate {
    pub start: usize,
    pub u_hat: f64,
    pub v_hat: f64,
    pub snr: Option<SnrDb>,
    pub h_hat: f64,
}

impl SubsampleEstimate {
    pub fn is_skipped(&self) -> bool {
        self.snr.is_none()
    }
}

/// `V̂ < 1e-12·max(Û, 1)` counts as zero.
fn below_floor(u_hat: f64, v_hat: f64) -> bool {
    v_hat < 1e-12 * u_hat.max(1.0)
}

/// Block statistics from the smoothed block `fitted` of `block`.
pub fn block_statistics(block: &[f64], fitted: &[f64], b1: usize) -> (f64, f64) {
    let u_hat = signal_power(fitted);
    let residuals: Vec<f64> = block[..b1]
        .iter()
        .zip(&fitted[..b1])
        .map(|(y, s)| y - s)
        .collect();
    let m = mean(&residuals);
    let v_hat = residuals.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / b1 as f64;
    (u_hat, v_hat)
}

/// Estimates one block already extracted from the series. A fixed
/// bandwidth bypasses CV.
pub fn estimate_block(
    block: &[f64],
    start: usize,
    cfg: &SubsampleConfig,
    bandwidth: Option<f64>,
) -> Result<SubsampleEstimate> {
    let (fitted, h_hat) = match bandwidth {
        Some(h) => (priestley_chao_fit(block, h)?, h),
        None => {
            let fit = select_bandwidth(block, cfg.regime_hint, &cfg.grid)?;
            (fit.fitted, fit.h_hat)
        }
    };
    let (u_hat, v_hat) = block_statistics(block, &fitted, cfg.b1);
    let snr = if below_floor(u_hat, v_hat) || u_hat <= 0.0 {
        None
    } else {
        Some(snr_db(u_hat, v_hat)?)
    };
    Ok(SubsampleEstimate {
        start,
        u_hat,
        v_hat,
        snr,
        h_hat,
    })
}

/// Estimate on the block of `series` starting at zero-based `start`.
pub fn block_estimate<S: BlockSource + ?Sized>(
    series: &S,
    start: usize,
    cfg: &SubsampleConfig,
) -> Result<SubsampleEstimate> {
    if start + cfg.b > series.len() {
        return Err(invalid(format!(
            "block [{start}, {}) exceeds series length {}",
            start + cfg.b,
            series.len()
        )));
    }
    estimate_block(&series.block(start, cfg.b), start, cfg, None)
}

/// Per-block outcome where CV could not select any bandwidth counts as a
/// skip rather than aborting the run.
fn tolerant_estimate<S: BlockSource + ?Sized>(
    series: &S,
    start: usize,
    cfg: &SubsampleConfig,
    bandwidth: Option<f64>,
) -> Result<SubsampleEstimate> {
    let block = series.block(start, cfg.b);
    match estimate_block(&block, start, cfg, bandwidth) {
        Err(Error::DegenerateCorrection) => Ok(SubsampleEstimate {
            start,
            u_hat: f64::NAN,
            v_hat: f64::NAN,
            snr: None,
            h_hat: f64::NAN,
        }),
        other => other,
    }
}

/// The subsample SNR values of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrDistribution {
    /// Valid block statistics, ascending.
    sorted: Vec<f64>,
    /// Every block estimate in draw order, skipped ones included.
    pub estimates: Vec<SubsampleEstimate>,
    pub skipped: usize,
    pub config: SubsampleConfig,
}

impl SnrDistribution {
    pub fn from_estimates(estimates: Vec<SubsampleEstimate>, config: SubsampleConfig) -> Self {
        let mut sorted: Vec<f64> = estimates
            .iter()
            .filter_map(|e| e.snr.map(|s| s.0))
            .collect();
        sorted.sort_by(f64::total_cmp);
        let skipped = estimates.len() - sorted.len();
        Self {
            sorted,
            estimates,
            skipped,
            config,
        }
    }

    /// Valid SNR values in dB, ascending.
    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn quantile(&self, level: QuantileLevel) -> Result<SnrDb> {
        if self.sorted.is_empty() {
            return Err(Error::Empty);
        }
        Ok(SnrDb(quantile_sorted(&self.sorted, level)))
    }

    pub fn median(&self) -> Result<SnrDb> {
        self.quantile(QuantileLevel::new(0.5)?)
    }

    pub fn median_bandwidth(&self) -> Option<f64> {
        let mut hs: Vec<f64> = self
            .estimates
            .iter()
            .filter(|e| !e.is_skipped())
            .map(|e| e.h_hat)
            .collect();
        if hs.is_empty() {
            return None;
        }
        hs.sort_by(f64::total_cmp);
        Some(quantile_sorted(&hs, QuantileLevel::new(0.5).ok()?))
    }

    pub fn confidence_interval(&self, level: f64) -> Result<(SnrDb, SnrDb)> {
        confidence_interval(self, level)
    }
}

/// Runs the randomized blockwise procedure on `series`.
///
/// Starts are drawn sequentially before any parallel work; blocks are
/// then estimated on the current rayon pool and collected in draw order,
/// so the result does not depend on the number of workers.
pub fn estimate_snr_distribution<S: BlockSource + ?Sized>(
    series: &S,
    cfg: &SubsampleConfig,
) -> Result<SnrDistribution> {
    let n = series.len();
    cfg.validate(n)?;
    let starts = draw_blocks(n, cfg.b, cfg.k_blocks, cfg.seed)?;
    let shared = match cfg.bandwidth_mode {
        BandwidthMode::PerBlock => None,
        BandwidthMode::Shared => {
            let block = series.block(starts[0], cfg.b);
            Some(select_bandwidth(&block, cfg.regime_hint, &cfg.grid)?.h_hat)
        }
    };
    let estimates = starts
        .par_iter()
        .map(|&t| tolerant_estimate(series, t, cfg, shared))
        .collect::<Result<Vec<_>>>()?;
    let dist = SnrDistribution::from_estimates(estimates, cfg.clone());
    let limit = cfg.skip_limit();
    if dist.skipped > limit || dist.is_empty() {
        return Err(Error::ExcessiveSkips {
            skipped: dist.skipped,
            total: cfg.k_blocks,
            limit,
        });
    }
    Ok(dist)
}

/// Interval `[q(α/2), q(1 − α/2)]` of the raw subsample SNR values with
/// `α = 1 − level`.
pub fn confidence_interval(dist: &SnrDistribution, level: f64) -> Result<(SnrDb, SnrDb)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let alpha = 1.0 - level;
    let lo = dist.quantile(QuantileLevel::new(alpha / 2.0)?)?;
    let hi = dist.quantile(QuantileLevel::new(1.0 - alpha / 2.0)?)?;
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCandidate {
    pub b: usize,
    pub b1: usize,
    /// Subsample quantiles at [`SELECTION_LEVELS`].
    pub quantiles: Vec<f64>,
    /// `None` at the two grid ends.
    pub volatility: Option<f64>,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSelection {
    pub chosen_b: usize,
    pub candidates: Vec<BlockCandidate>,
}

/// Sample standard deviation of a short window.
fn window_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Minimum-volatility choice among interior candidates.
///
/// `quantiles[j]` holds the tracked quantiles at candidate `j`. The
/// volatility at an interior `j` sums, over tracked quantiles, the standard
/// deviation across `j − 1, j, j + 1`. Ties go to the smaller index.
pub fn min_volatility(quantiles: &[Vec<f64>]) -> Result<(usize, Vec<Option<f64>>)> {
    if quantiles.len() < 3 {
        return Err(invalid("volatility needs at least 3 candidates"));
    }
    let mut vol = vec![None; quantiles.len()];
    let mut best: Option<(usize, f64)> = None;
    for j in 1..quantiles.len() - 1 {
        let v: f64 = (0..quantiles[j].len())
            .map(|q| window_sd(&[quantiles[j - 1][q], quantiles[j][q], quantiles[j + 1][q]]))
            .sum();
        vol[j] = Some(v);
        if best.is_none_or(|(_, bv)| v < bv) {
            best = Some((j, v));
        }
    }
    Ok((best.expect("at least one interior point").0, vol))
}

/// Minimum grid length for block-size selection.
pub const MIN_BLOCK_GRID: usize = 5;

/// Picks the block length whose tail quantiles are most stable across
/// neighbouring candidates.
pub fn select_block_size<S: BlockSource + ?Sized>(
    series: &S,
    grid: &[usize],
    template: &SubsampleConfig,
) -> Result<BlockSelection> {
    if grid.len() < MIN_BLOCK_GRID {
        return Err(invalid(format!(
            "block grid needs at least {MIN_BLOCK_GRID} candidates, got {}",
            grid.len()
        )));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("block grid must be strictly increasing"));
    }
    let levels: Vec<QuantileLevel> = SELECTION_LEVELS
        .iter()
        .map(|&p| QuantileLevel::new(p))
        .collect::<Result<_>>()?;
    let mut candidates = Vec::with_capacity(grid.len());
    for &b in grid {
        let cfg = template.with_block(b);
        let dist = estimate_snr_distribution(series, &cfg)?;
        let quantiles = levels
            .iter()
            .map(|&l| dist.quantile(l).map(|q| q.0))
            .collect::<Result<Vec<_>>>()?;
        candidates.push(BlockCandidate {
            b,
            b1: cfg.b1,
            quantiles,
            volatility: None,
            skipped: dist.skipped,
        });
    }
    let qs: Vec<Vec<f64>> = candidates.iter().map(|c| c.quantiles.clone()).collect();
    let (best, vol) = min_volatility(&qs)?;
    for (c, v) in candidates.iter_mut().zip(vol) {
        c.volatility = v;
    }
    Ok(BlockSelection {
        chosen_b: grid[best],
        candidates,
    })
}
