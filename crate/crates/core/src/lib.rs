//! Distribution, quantiles and confidence intervals of a signal-to-noise
//! ratio statistic for long, uniformly sampled time series.
//!
//! The estimator never smooths the whole series. It draws `K` random
//! blocks, fits a Priestley-Chao kernel smoother on each block with a
//! bandwidth chosen by dependence-corrected cross-validation, and forms a
//! per-block SNR from the smoothed signal power and the residual variance
//! on a short leading sub-window. The empirical distribution of the block
//! statistics yields quantiles and confidence intervals.
//!
//! ```no_run
//! use snrsub_core::{estimate_snr_distribution, gen_design, Design, DesignSpec, SubsampleConfig};
//!
//! let data = gen_design(&DesignSpec::new(Design::Ar, 10.0, 44100.0, 3.0), 7)?;
//! let dist = estimate_snr_distribution(&data.series, &SubsampleConfig::new(441, 200, 1))?;
//! let (lo, hi) = dist.confidence_interval(0.9)?;
//! println!("median {} CI [{lo}, {hi}]", dist.median()?);
//! # Ok::<(), snrsub_core::Error>(())
//! ```

pub mod error;
pub mod harness;
pub mod simgen;
pub mod smoother;
pub mod stats;
pub mod subsample;
pub mod types;

pub use error::{Error, Result};
pub use harness::{ExperimentSpec, McReport, McRun};
pub use simgen::{gen_design, Design, DesignSeries, DesignSpec, NoiseSpec, SignalSpec};
pub use smoother::{select_bandwidth, BandwidthGrid, KernelFit};
pub use stats::{empirical_quantile, lambda_n, signal_power, snr_db, tau_n};
pub use subsample::{
    confidence_interval, estimate_snr_distribution, select_block_size, BlockSource,
    SnrDistribution, SubsampleConfig, SubsampleEstimate,
};
pub use types::{ms_to_samples, DependenceRegime, QuantileLevel, SnrDb, TimeSeries};
