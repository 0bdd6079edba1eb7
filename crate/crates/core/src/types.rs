//! Domain types shared across the crate.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Uniformly sampled real-valued observations.
///
/// For estimation the samples are placed on the logical grid `i/n`,
/// `i = 1..=n`, of the unit interval; `sample_rate_hz` is carried only to
/// convert between physical durations and sample counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty);
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Number of samples spanning `ms` milliseconds, rounded to nearest.
    pub fn samples_for_ms(&self, ms: f64) -> usize {
        ms_to_samples(ms, self.sample_rate_hz)
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// `ms` milliseconds at `fs` Hz, rounded to the nearest sample.
///
/// 10 ms at 44.1 kHz is 441 samples and 15 ms is 662 (661.5 rounds up).
pub fn ms_to_samples(ms: f64, fs: f64) -> usize {
    (ms * fs / 1000.0).round() as usize
}

/// Short- or long-range dependence of the noise process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DependenceRegime {
    Srd,
    /// Long memory with `0 < gamma1 <= 1`; smaller is stronger.
    Lrd {
        gamma1: f64,
    },
}

impl DependenceRegime {
    pub fn lrd(gamma1: f64) -> Result<Self> {
        if gamma1 > 0.0 && gamma1 <= 1.0 {
            Ok(DependenceRegime::Lrd { gamma1 })
        } else {
            Err(invalid(format!("gamma1 must lie in (0, 1], got {gamma1}")))
        }
    }
}

/// A signal-to-noise ratio in decibels.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SnrDb(pub f64);

impl SnrDb {
    pub fn value(self) -> f64 {
        self.0
    }

    /// Linear power ratio `10^(dB/10)`.
    pub fn ratio(self) -> f64 {
        10f64.powf(self.0 / 10.0)
    }
}

impl std::fmt::Display for SnrDb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} dB", self.0)
    }
}

/// Probability level strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(gamma2: f64) -> Result<Self> {
        if gamma2 > 0.0 && gamma2 < 1.0 {
            Ok(Self(gamma2))
        } else {
            Err(invalid(format!(
                "quantile level must lie in (0, 1), got {gamma2}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for QuantileLevel {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QuantileLevel> for f64 {
    fn from(q: QuantileLevel) -> f64 {
        q.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_series() {
        assert_eq!(TimeSeries::new(vec![], 1.0), Err(Error::Empty));
        assert_eq!(
            TimeSeries::new(vec![1.0, f64::NAN], 1.0),
            Err(Error::NonFinite(1))
        );
        assert!(TimeSeries::new(vec![1.0], 0.0).is_err());
        assert!(TimeSeries::new(vec![1.0], -3.0).is_err());
    }

    #[test]
    fn block_ms_conversion() {
        assert_eq!(ms_to_samples(10.0, 44100.0), 441);
        assert_eq!(ms_to_samples(15.0, 44100.0), 662);
        assert_eq!(ms_to_samples(2000.0, 256.0), 512);
    }

    #[test]
    fn regime_bounds() {
        assert!(DependenceRegime::lrd(1.0).is_ok());
        assert!(DependenceRegime::lrd(0.0).is_err());
        assert!(DependenceRegime::lrd(1.2).is_err());
    }

    #[test]
    fn quantile_level_bounds() {
        assert!(QuantileLevel::new(0.0).is_err());
        assert!(QuantileLevel::new(1.0).is_err());
        assert_eq!(QuantileLevel::new(0.25).unwrap().get(), 0.25);
    }
}
