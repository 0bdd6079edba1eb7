//! Synthetic designs: a sinusoid plus AR(1) or `1/f^β` noise, calibrated
//! to an exact target SNR.
//!
//! All randomness flows from a 64-bit seed through ChaCha8 streams, so a
//! generator called with the same arguments returns bit-identical output
//! regardless of thread count or call order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stats::{mean, variance};
use crate::types::{SnrDb, TimeSeries};

/// Samples discarded before an AR(1) path is recorded.
pub const AR_BURN_IN: usize = 1000;

/// Frequency of the sinusoid in the reference designs.
pub const DESIGN_FREQUENCY_HZ: f64 = 50.0;

/// Generator for stream `stream` of master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed for index `index`; independent of any other index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    stream_rng(master, index).next_u64()
}

/// Amplitude whose sinusoid has power `A²/2` at `target` dB over noise of
/// variance `noise_variance`.
pub fn calibrate_amplitude(target: SnrDb, noise_variance: f64) -> Result<f64> {
    if !(noise_variance > 0.0 && noise_variance.is_finite()) {
        return Err(invalid(format!(
            "noise variance must be positive, got {noise_variance}"
        )));
    }
    Ok((2.0 * noise_variance * target.ratio()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
}

impl SignalSpec {
    /// Sample count `duration · fs`; must be a positive integer.
    pub fn n(&self) -> Result<usize> {
        if !(self.sample_rate_hz > 0.0 && self.duration_s > 0.0) {
            return Err(invalid("sample rate and duration must be positive"));
        }
        if !(self.frequency_hz >= 0.0 && self.frequency_hz < self.sample_rate_hz / 2.0) {
            return Err(Error::Nyquist {
                frequency_hz: self.frequency_hz,
                sample_rate_hz: self.sample_rate_hz,
            });
        }
        let exact = self.duration_s * self.sample_rate_hz;
        let n = exact.round();
        if n < 1.0 || (exact - n).abs() > 1e-6 * exact.max(1.0) {
            return Err(invalid(format!(
                "duration x sample rate must be a positive integer, got {exact}"
            )));
        }
        Ok(n as usize)
    }
}

/// `s_i = A·sin(2π f t_i)` with `t_i = (i − 1)/fs`.
pub fn gen_sine(spec: &SignalSpec) -> Result<TimeSeries> {
    let n = spec.n()?;
    let w = 2.0 * std::f64::consts::PI * spec.frequency_hz / spec.sample_rate_hz;
    let samples = (0..n)
        .map(|i| spec.amplitude * (w * i as f64).sin())
        .collect();
    TimeSeries::new(samples, spec.sample_rate_hz)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Gaussian white noise. A zero variance yields silence.
    White { variance: f64 },
    /// Gaussian AR(1) with stationary variance `variance`.
    Ar1 { phi: f64, variance: f64 },
    /// Spectral synthesis with `P(f) ∝ f^{-β}`, rescaled to `variance`.
    PowerLaw { beta: f64, variance: f64 },
}

impl NoiseSpec {
    pub fn variance(&self) -> f64 {
        match *self {
            NoiseSpec::White { variance }
            | NoiseSpec::Ar1 { variance, .. }
            | NoiseSpec::PowerLaw { variance, .. } => variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::White { variance } if variance >= 0.0 && variance.is_finite() => Ok(()),
            NoiseSpec::Ar1 { phi, variance } if phi.abs() < 1.0 && variance > 0.0 => Ok(()),
            NoiseSpec::PowerLaw { beta, variance }
                if (0.0..=1.0).contains(&beta) && variance > 0.0 =>
            {
                Ok(())
            }
            other => Err(invalid(format!("invalid noise spec {other:?}"))),
        }
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        match *self {
            NoiseSpec::White { variance } => Ok(gen_white(variance, n, seed)),
            NoiseSpec::Ar1 { phi, variance } => gen_ar1(phi, variance, n, seed),
            NoiseSpec::PowerLaw { beta, variance } => gen_powerlaw(beta, variance, n, seed),
        }
    }
}

fn gen_white(variance: f64, n: usize, seed: u64) -> Vec<f64> {
    let sd = variance.sqrt();
    let mut rng = stream_rng(seed, 0);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect()
}

/// Gaussian AR(1) `ε_i = φ ε_{i−1} + u_i` with innovation sd chosen so
/// the stationary variance is `target_variance`.
pub fn gen_ar1(phi: f64, target_variance: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if phi.abs() >= 1.0 {
        return Err(invalid(format!("AR(1) needs |phi| < 1, got {phi}")));
    }
    if target_variance.is_nan() || target_variance <= 0.0 {
        return Err(invalid("AR(1) variance must be positive"));
    }
    let sd = (target_variance * (1.0 - phi * phi)).sqrt();
    let mut rng = stream_rng(seed, 0);
    let mut x = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..AR_BURN_IN + n {
        let u: f64 = StandardNormal.sample(&mut rng);
        x = phi * x + sd * u;
        if i >= AR_BURN_IN {
            out.push(x);
        }
    }
    Ok(out)
}

/// Minimum length for spectral synthesis.
pub const MIN_POWERLAW_LEN: usize = 16;

/// Noise with expected periodogram `∝ f^{-β}` by random-phase spectral
/// synthesis.
///
/// For `k = 1..=n/2` the real and imaginary Fourier coefficients are drawn
/// from `Normal(0, P(f_k)/2)`, the Nyquist bin of an even length is kept
/// real, the DC bin is zero and the spectrum is conjugate-symmetrized
/// before an inverse DFT. The series is then shifted to mean zero and
/// scaled to sample variance `target_variance` exactly.
pub fn gen_powerlaw(beta: f64, target_variance: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid(format!("beta must lie in [0, 1], got {beta}")));
    }
    if n < MIN_POWERLAW_LEN {
        return Err(invalid(format!(
            "power-law synthesis needs n >= {MIN_POWERLAW_LEN}, got {n}"
        )));
    }
    if target_variance.is_nan() || target_variance <= 0.0 {
        return Err(invalid("power-law variance must be positive"));
    }
    let mut rng = stream_rng(seed, 0);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    let half = n / 2;
    for k in 1..=half {
        let sd = (0.5 * (k as f64).powf(-beta)).sqrt();
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        let coef = if n.is_multiple_of(2) && k == half {
            Complex64::new(sd * re, 0.0)
        } else {
            Complex64::new(sd * re, sd * im)
        };
        spectrum[k] = coef;
        spectrum[n - k] = coef.conj();
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    let mut out: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    let m = mean(&out);
    out.iter_mut().for_each(|x| *x -= m);
    let scale = (target_variance / variance(&out)).sqrt();
    out.iter_mut().for_each(|x| *x *= scale);
    Ok(out)
}

/// Noise process of a reference design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    /// AR(1) noise with `φ = −0.7`.
    Ar,
    /// `1/f^0.2` noise.
    P1,
    /// `1/f^0.6` noise.
    P2,
    /// The sinusoid alone.
    SineOnly,
    /// White noise alone.
    NoiseOnly,
}

impl Design {
    pub fn noise(self, variance: f64) -> Option<NoiseSpec> {
        match self {
            Design::Ar => Some(NoiseSpec::Ar1 {
                phi: -0.7,
                variance,
            }),
            Design::P1 => Some(NoiseSpec::PowerLaw {
                beta: 0.2,
                variance,
            }),
            Design::P2 => Some(NoiseSpec::PowerLaw {
                beta: 0.6,
                variance,
            }),
            Design::SineOnly => None,
            Design::NoiseOnly => Some(NoiseSpec::White { variance }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Design::Ar => "ar",
            Design::P1 => "p1",
            Design::P2 => "p2",
            Design::SineOnly => "sine-only",
            Design::NoiseOnly => "noise-only",
        }
    }
}

impl std::str::FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ar" => Ok(Design::Ar),
            "p1" => Ok(Design::P1),
            "p2" => Ok(Design::P2),
            "sine-only" | "sine" => Ok(Design::SineOnly),
            "noise-only" | "noise" => Ok(Design::NoiseOnly),
            other => Err(invalid(format!("unknown design '{other}'"))),
        }
    }
}

impl std::fmt::Display for Design {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Full description of a synthetic series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub design: Design,
    pub snr: SnrDb,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub noise_variance: f64,
    pub frequency_hz: f64,
    /// Overrides the calibrated amplitude (used by sine-only series).
    pub amplitude: Option<f64>,
}

impl DesignSpec {
    pub fn new(design: Design, snr_db: f64, sample_rate_hz: f64, duration_s: f64) -> Self {
        Self {
            design,
            snr: SnrDb(snr_db),
            sample_rate_hz,
            duration_s,
            noise_variance: 1.0,
            frequency_hz: DESIGN_FREQUENCY_HZ,
            amplitude: None,
        }
    }

    pub fn amplitude(&self) -> Result<f64> {
        match (self.design, self.amplitude) {
            (Design::NoiseOnly, _) => Ok(0.0),
            (_, Some(a)) => Ok(a),
            (_, None) => calibrate_amplitude(self.snr, self.noise_variance),
        }
    }

    pub fn signal_spec(&self) -> Result<SignalSpec> {
        Ok(SignalSpec {
            amplitude: self.amplitude()?,
            frequency_hz: self.frequency_hz,
            sample_rate_hz: self.sample_rate_hz,
            duration_s: self.duration_s,
        })
    }

    pub fn noise(&self) -> Option<NoiseSpec> {
        self.design.noise(self.noise_variance)
    }

    pub fn n(&self) -> Result<usize> {
        self.signal_spec()?.n()
    }

    /// Signal power `A²/2`.
    pub fn signal_power(&self) -> Result<f64> {
        let a = self.amplitude()?;
        Ok(a * a / 2.0)
    }

    /// SNR implied by the construction constants; `None` without noise or
    /// without signal.
    pub fn true_snr(&self) -> Result<Option<SnrDb>> {
        let p = self.signal_power()?;
        match self.noise() {
            Some(noise) if noise.variance() > 0.0 && p > 0.0 => {
                Ok(Some(crate::stats::snr_db(p, noise.variance())?))
            }
            _ => Ok(None),
        }
    }
}

/// A generated series together with its construction constants.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSeries {
    pub spec: DesignSpec,
    pub series: TimeSeries,
    pub amplitude: f64,
}

/// Sinusoid plus design noise, calibrated so the true SNR equals
/// `spec.snr` (unless the amplitude is overridden).
pub fn gen_design(spec: &DesignSpec, seed: u64) -> Result<DesignSeries> {
    let signal = gen_sine(&spec.signal_spec()?)?;
    let fs = signal.sample_rate_hz();
    let n = signal.len();
    let mut samples = signal.into_samples();
    if let Some(noise) = spec.noise() {
        let eps = noise.generate(n, seed)?;
        samples.iter_mut().zip(&eps).for_each(|(s, e)| *s += e);
    }
    Ok(DesignSeries {
        spec: *spec,
        series: TimeSeries::new(samples, fs)?,
        amplitude: spec.amplitude()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::signal_power;

    fn lag_corr(x: &[f64], k: usize) -> f64 {
        let m = mean(x);
        let num: f64 = x[..x.len() - k]
            .iter()
            .zip(&x[k..])
            .map(|(a, b)| (a - m) * (b - m))
            .sum();
        num / x.iter().map(|a| (a - m) * (a - m)).sum::<f64>()
    }

    #[test]
    fn amplitude_examples() {
        assert!((calibrate_amplitude(SnrDb(0.0), 0.5).unwrap() - 1.0).abs() < 1e-15);
        // mpmath: sqrt(2 * 10^0.6)
        assert!(
            (calibrate_amplitude(SnrDb(6.0), 1.0).unwrap() - 2.821_727_026_320_928).abs() < 1e-12
        );
        assert!((calibrate_amplitude(SnrDb(10.0), 1.0).unwrap() - 20f64.sqrt()).abs() < 1e-12);
        assert!(calibrate_amplitude(SnrDb(10.0), 0.0).is_err());
    }

    #[test]
    fn calibration_roundtrip() {
        let a = calibrate_amplitude(SnrDb(6.0), 1.3).unwrap();
        let snr = crate::stats::snr_db(a * a / 2.0, 1.3).unwrap();
        assert!((snr.0 - 6.0).abs() < 1e-12);
    }

    #[test]
    fn sine_examples() {
        let spec = SignalSpec {
            amplitude: 1.0,
            frequency_hz: 50.0,
            sample_rate_hz: 44100.0,
            duration_s: 1.0,
        };
        let s = gen_sine(&spec).unwrap();
        assert_eq!(s.samples()[0], 0.0);
        assert!((signal_power(s.samples()) - 0.5).abs() < 1e-6);
        let zero = gen_sine(&SignalSpec {
            amplitude: 0.0,
            ..spec
        })
        .unwrap();
        assert!(zero.samples().iter().all(|&v| v == 0.0));
        let bad = SignalSpec {
            frequency_hz: 30000.0,
            ..spec
        };
        assert!(matches!(gen_sine(&bad), Err(Error::Nyquist { .. })));
        let frac = SignalSpec {
            duration_s: 1.00001,
            ..spec
        };
        assert!(gen_sine(&frac).is_err());
    }

    #[test]
    fn ar1_white_limit() {
        // phi = 0 is iid with the target variance
        let x = gen_ar1(0.0, 2.0, 100_000, 3).unwrap();
        assert!((variance(&x) - 2.0).abs() < 0.05);
        assert!(lag_corr(&x, 1).abs() < 0.02);
    }

    #[test]
    fn ar1_moments() {
        let x = gen_ar1(-0.7, 1.0, 100_000, 11).unwrap();
        assert!((lag_corr(&x, 1) + 0.7).abs() < 0.03);
        assert!((variance(&x) - 1.0).abs() < 0.05);
        for k in 1..=5 {
            assert!(
                (lag_corr(&x, k) - (-0.7f64).powi(k as i32)).abs() < 0.05,
                "lag {k}"
            );
        }
        assert!(gen_ar1(1.0, 1.0, 10, 0).is_err());
    }

    #[test]
    fn powerlaw_exact_moments() {
        for beta in [0.0, 0.2, 0.6, 1.0] {
            for n in [16, 17, 1000] {
                let x = gen_powerlaw(beta, 0.7, n, 5).unwrap();
                assert_eq!(x.len(), n);
                assert!(mean(&x).abs() < 1e-12);
                assert!((variance(&x) - 0.7).abs() < 1e-12);
            }
        }
        assert!(gen_powerlaw(1.5, 1.0, 64, 0).is_err());
        assert!(gen_powerlaw(0.5, 1.0, 15, 0).is_err());
    }

    #[test]
    fn design_sizes_and_determinism() {
        let spec = DesignSpec::new(Design::Ar, 10.0, 44100.0, 30.0);
        assert_eq!(spec.n().unwrap(), 1_323_000);
        let small = DesignSpec::new(Design::P2, 10.0, 44100.0, 0.5);
        let a = gen_design(&small, 42).unwrap();
        let b = gen_design(&small, 42).unwrap();
        assert_eq!(a.series, b.series);
        let c = gen_design(&small, 43).unwrap();
        assert_ne!(a.series, c.series);
    }

    #[test]
    fn design_true_snr_is_exact() {
        for d in [Design::Ar, Design::P1, Design::P2] {
            for snr in [6.0, 10.0] {
                let spec = DesignSpec::new(d, snr, 44100.0, 1.0);
                let t = spec.true_snr().unwrap().unwrap();
                assert!((t.0 - snr).abs() < 1e-12);
            }
        }
        let sine = DesignSpec {
            amplitude: Some(1.0),
            ..DesignSpec::new(Design::SineOnly, 0.0, 44100.0, 1.0)
        };
        assert_eq!(sine.signal_power().unwrap(), 0.5);
        assert_eq!(sine.true_snr().unwrap(), None);
    }

    #[test]
    fn design_sample_snr_p2() {
        let spec = DesignSpec::new(Design::P2, 6.0, 44100.0, 3.0);
        let ds = gen_design(&spec, 9).unwrap();
        let sig = gen_sine(&spec.signal_spec().unwrap()).unwrap();
        let noise: Vec<f64> = ds
            .series
            .samples()
            .iter()
            .zip(sig.samples())
            .map(|(y, s)| y - s)
            .collect();
        let realized = crate::stats::snr_db(signal_power(sig.samples()), variance(&noise)).unwrap();
        assert!((realized.0 - 6.0).abs() < 0.3, "{realized}");
    }

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let mut u = s.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), s.len());
        assert_eq!(derive_seed(7, 3), s[3]);
    }

    #[test]
    fn design_names_parse() {
        for d in [
            Design::Ar,
            Design::P1,
            Design::P2,
            Design::SineOnly,
            Design::NoiseOnly,
        ] {
            assert_eq!(d.name().parse::<Design>().unwrap(), d);
        }
        assert!("ar2".parse::<Design>().is_err());
    }
}
