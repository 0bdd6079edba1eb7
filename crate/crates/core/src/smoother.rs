//! Priestley-Chao kernel regression with the Epanechnikov kernel and a
//! cross-validation bandwidth selector corrected for serially correlated
//! errors.
//!
//! Observations `y_1..y_n` sit on the grid `i/n`. The fit at `t` is the
//! kernel-weighted average
//!
//! ```text
//! ŝ(t) = Σ K((t − i/n)/h) y_i / Σ K((t − i/n)/h)
//! ```
//!
//! Normalizing by the weight sum reproduces constants exactly and removes
//! the edge attenuation of the raw `1/(nh)` form. On the interior of a
//! uniform design both forms agree to `O(1/(nh))`.
//!
//! The bandwidth minimizes
//!
//! ```text
//! CV(h) = [1 − (1/(nh)) Σ_{|j|<=M} K(j/(nh)) ρ̂(j)]^{-2} · (1/n) Σ ε̂_i²
//! ```
//!
//! where `ρ̂` is the sample autocorrelation of the residuals at the same `h`
//! and `M = max(1, ⌊√(nh)⌋)`, capped at `⌊n/4⌋`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::simgen::{derive_seed, NoiseSpec};
use crate::stats::lambda_scale;
use crate::types::DependenceRegime;

/// A bandwidth whose correction factor falls below this is rejected.
pub const CORRECTION_GUARD: f64 = 0.05;

/// Largest admissible bandwidth, as a fraction of the unit interval.
pub const MAX_BANDWIDTH: f64 = 0.5;

/// Grid bandwidths must span at least this many sample spacings. Below
/// one spacing the fit interpolates the data and CV collapses to zero.
pub const MIN_BANDWIDTH_SPACINGS: f64 = 2.0;

pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Log-spaced candidate bandwidths on `[c1·Λ^{-1/5}, c2·Λ^{-1/5}]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthGrid {
    pub c1: f64,
    pub c2: f64,
    pub points: usize,
}

impl Default for BandwidthGrid {
    fn default() -> Self {
        Self {
            c1: 0.05,
            c2: 1.0,
            points: 25,
        }
    }
}

impl BandwidthGrid {
    pub fn new(c1: f64, c2: f64, points: usize) -> Result<Self> {
        if !(c1 > 0.0 && c1 < c2 && c2.is_finite()) {
            return Err(invalid(format!(
                "bandwidth grid needs 0 < c1 < c2, got c1 = {c1}, c2 = {c2}"
            )));
        }
        if points < 2 {
            return Err(invalid("bandwidth grid needs at least 2 points"));
        }
        Ok(Self { c1, c2, points })
    }

    /// Candidate bandwidths for a sample of size `n`, ascending.
    ///
    /// `Λ` is taken from `regime`, or as `n` (short memory) when no regime
    /// is given. Values above [`MAX_BANDWIDTH`] are clamped, values below
    /// [`MIN_BANDWIDTH_SPACINGS`]`/n` dropped and duplicates removed, so the
    /// result may hold fewer than `points` entries.
    pub fn values(&self, n: usize, regime: Option<DependenceRegime>) -> Vec<f64> {
        let lambda = lambda_scale(n as f64, regime.unwrap_or(DependenceRegime::Srd));
        let rate = lambda.powf(-0.2);
        let (lo, hi) = ((self.c1 * rate).ln(), (self.c2 * rate).ln());
        let step = (hi - lo) / (self.points - 1) as f64;
        let floor = MIN_BANDWIDTH_SPACINGS / n as f64;
        let mut hs: Vec<f64> = (0..self.points)
            .map(|i| (lo + step * i as f64).exp().min(MAX_BANDWIDTH))
            .filter(|&h| h >= floor)
            .collect();
        hs.dedup();
        hs
    }
}

/// Kernel weights `K(d/(nh))` for integer offsets `d = 0..=⌊nh⌋`.
fn offset_weights(n: usize, h: f64) -> Vec<f64> {
    let nh = n as f64 * h;
    let reach = (nh.floor() as usize).min(n - 1);
    (0..=reach).map(|d| epanechnikov(d as f64 / nh)).collect()
}

fn check_fit_args(n: usize, h: f64) -> Result<()> {
    if n < 3 {
        return Err(invalid(format!("kernel fit needs n >= 3, got {n}")));
    }
    if !(h > 0.0 && h <= MAX_BANDWIDTH) {
        return Err(invalid(format!("bandwidth must lie in (0, 0.5], got {h}")));
    }
    Ok(())
}

/// Priestley-Chao fit evaluated at every sample point `j/n`.
pub fn priestley_chao_fit(y: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = y.len();
    check_fit_args(n, h)?;
    let w = offset_weights(n, h);
    let reach = w.len() - 1;
    let mut fitted = Vec::with_capacity(n);
    for j in 0..n {
        let lo = j.saturating_sub(reach);
        let hi = (j + reach).min(n - 1);
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &yi) in y.iter().enumerate().take(hi + 1).skip(lo) {
            let wi = w[i.abs_diff(j)];
            num += wi * yi;
            den += wi;
        }
        // w[0] = 0.75 keeps den positive on the sample grid
        fitted.push(num / den);
    }
    Ok(fitted)
}

/// Priestley-Chao fit at an arbitrary `t` in the unit interval.
pub fn priestley_chao_at(y: &[f64], h: f64, t: f64) -> Result<f64> {
    let n = y.len();
    check_fit_args(n, h)?;
    let nf = n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &yi) in y.iter().enumerate() {
        let k = epanechnikov((t - (i + 1) as f64 / nf) / h);
        num += k * yi;
        den += k;
    }
    if den <= 0.0 {
        return Err(Error::DegenerateWeights(t));
    }
    Ok(num / den)
}

/// `γ̂(j) = (1/n) Σ_{t=1}^{n−j} ε̂_t ε̂_{t+j}`, without mean removal.
pub fn autocovariance(residuals: &[f64], lag: usize) -> Result<f64> {
    let n = residuals.len();
    if lag >= n {
        return Err(Error::LagOutOfRange { lag, len: n });
    }
    Ok(autocov_unchecked(residuals, lag))
}

fn autocov_unchecked(residuals: &[f64], lag: usize) -> f64 {
    let n = residuals.len();
    residuals[..n - lag]
        .iter()
        .zip(&residuals[lag..])
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n as f64
}

/// How the residual sum of squares is inflated in the CV objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvCorrection {
    /// Sample autocorrelations up to lag `M`.
    Dependent,
    /// Lag 0 only, as if the errors were uncorrelated.
    Independent,
}

/// Lag cutoff `M = max(1, ⌊√(nh)⌋)`, capped at `⌊n/4⌋`.
pub fn lag_cutoff(n: usize, h: f64) -> usize {
    let m = ((n as f64 * h).sqrt().floor() as usize).max(1);
    m.min((n / 4).max(1))
}

#[derive(Debug, Clone)]
struct CvEval {
    cv: f64,
    fitted: Vec<f64>,
}

fn cv_eval(y: &[f64], h: f64, m: usize, correction: CvCorrection) -> Result<CvEval> {
    let n = y.len();
    let fitted = priestley_chao_fit(y, h)?;
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let nh = n as f64 * h;
    let gamma0 = autocov_unchecked(&residuals, 0);
    let mut weighted = epanechnikov(0.0);
    if correction == CvCorrection::Dependent && gamma0 > 0.0 {
        for j in 1..=m {
            let rho = autocov_unchecked(&residuals, j) / gamma0;
            weighted += 2.0 * epanechnikov(j as f64 / nh) * rho;
        }
    }
    let factor = 1.0 - weighted / nh;
    let cv = if factor < CORRECTION_GUARD {
        f64::INFINITY
    } else {
        gamma0 / (factor * factor)
    };
    Ok(CvEval { cv, fitted })
}

/// Corrected cross-validation objective at bandwidth `h` with lag cutoff
/// `m`. Returns `+∞` when the correction factor is below
/// [`CORRECTION_GUARD`].
pub fn cv_objective(y: &[f64], h: f64, m: usize) -> Result<f64> {
    let n = y.len();
    if m < 1 || m > n / 4 {
        return Err(invalid(format!("lag cutoff must lie in [1, n/4], got {m}")));
    }
    Ok(cv_eval(y, h, m, CvCorrection::Dependent)?.cv)
}

/// Kernel fit at the CV-selected bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFit {
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub h_hat: f64,
    /// `(h, CV(h))` for every evaluated bandwidth, ascending in `h`.
    pub cv_curve: Vec<(f64, f64)>,
    /// Lag cutoff used at `h_hat`.
    pub m_lags: usize,
}

/// Minimum length accepted by [`select_bandwidth`].
pub const MIN_SELECT_LEN: usize = 16;

/// Evaluates the corrected CV on the grid and returns the fit at its
/// minimizer. Ties go to the smaller bandwidth.
pub fn select_bandwidth(
    y: &[f64],
    regime_hint: Option<DependenceRegime>,
    grid: &BandwidthGrid,
) -> Result<KernelFit> {
    let hs = grid.values(y.len(), regime_hint);
    select_bandwidth_from(y, &hs, CvCorrection::Dependent)
}

/// [`select_bandwidth`] over explicit candidates and correction.
pub fn select_bandwidth_from(
    y: &[f64],
    candidates: &[f64],
    correction: CvCorrection,
) -> Result<KernelFit> {
    let n = y.len();
    if n < MIN_SELECT_LEN {
        return Err(invalid(format!(
            "bandwidth selection needs n >= {MIN_SELECT_LEN}, got {n}"
        )));
    }
    if candidates.is_empty() {
        return Err(invalid("empty bandwidth candidate list"));
    }
    let mut best: Option<(f64, usize, CvEval)> = None;
    let mut cv_curve = Vec::with_capacity(candidates.len());
    for &h in candidates {
        let m = lag_cutoff(n, h);
        let eval = cv_eval(y, h, m, correction)?;
        cv_curve.push((h, eval.cv));
        let better = match &best {
            None => eval.cv.is_finite(),
            Some((bh, _, b)) => eval.cv < b.cv || (eval.cv == b.cv && h < *bh),
        };
        if better {
            best = Some((h, m, eval));
        }
    }
    let (h_hat, m_lags, eval) = best.ok_or(Error::DegenerateCorrection)?;
    let residuals = y.iter().zip(&eval.fitted).map(|(a, b)| a - b).collect();
    Ok(KernelFit {
        fitted: eval.fitted,
        residuals,
        h_hat,
        cv_curve,
        m_lags,
    })
}

/// Empirical MISE at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseRow {
    pub n: usize,
    pub mise: f64,
    pub se: f64,
    pub mean_h: f64,
}

/// Average interior integrated squared error of the CV-selected fit of
/// `s_true` observed with additive `noise`, for each sample size.
///
/// The integral runs over grid points with `h < t < 1 − h`.
pub fn mise_probe<F>(
    s_true: F,
    noise: &NoiseSpec,
    n_list: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<Vec<MiseRow>>
where
    F: Fn(f64) -> f64 + Sync,
{
    use rayon::prelude::*;

    if replicas < 10 {
        return Err(invalid("mise probe needs at least 10 replicas"));
    }
    let grid = BandwidthGrid::default();
    n_list
        .iter()
        .map(|&n| {
            let signal: Vec<f64> = (1..=n).map(|i| s_true(i as f64 / n as f64)).collect();
            let runs: Vec<(f64, f64)> = (0..replicas)
                .into_par_iter()
                .map(|r| {
                    let eps = noise.generate(n, derive_seed(seed ^ n as u64, r as u64))?;
                    let y: Vec<f64> = signal.iter().zip(&eps).map(|(s, e)| s + e).collect();
                    let fit = select_bandwidth(&y, None, &grid)?;
                    let h = fit.h_hat;
                    let ise = (1..=n)
                        .filter(|&i| {
                            let t = i as f64 / n as f64;
                            t > h && t < 1.0 - h
                        })
                        .map(|i| (fit.fitted[i - 1] - signal[i - 1]).powi(2))
                        .sum::<f64>()
                        / n as f64;
                    Ok((ise, h))
                })
                .collect::<Result<_>>()?;
            let ises: Vec<f64> = runs.iter().map(|r| r.0).collect();
            let (mise, se) = mean_and_se(&ises);
            let mean_h = runs.iter().map(|r| r.1).sum::<f64>() / replicas as f64;
            Ok(MiseRow {
                n,
                mise,
                se,
                mean_h,
            })
        })
        .collect()
}

pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn kernel_points() {
        assert_eq!(epanechnikov(0.0), 0.75);
        assert_eq!(epanechnikov(1.0), 0.0);
        assert_eq!(epanechnikov(-1.0), 0.0);
        assert_eq!(epanechnikov(0.5), 0.5625);
        assert_eq!(epanechnikov(1.5), 0.0);
    }

    #[test]
    fn grid_values() {
        let g = BandwidthGrid::default();
        let hs = g.values(441, None);
        assert_eq!(hs.len(), 25);
        let rate = 441f64.powf(-0.2);
        assert!((hs[0] - 0.05 * rate).abs() < 1e-15);
        assert!((hs[24] - rate).abs() < 1e-12);
        assert!(hs.windows(2).all(|w| w[0] < w[1]));
        // small n clamps at 0.5 and drops interpolating bandwidths
        let hs = g.values(16, None);
        assert!(hs.iter().all(|&h| h * 16.0 >= 2.0 && h <= 0.5));
        assert_eq!(*hs.last().unwrap(), 0.5);
        assert!(BandwidthGrid::new(1.0, 0.5, 5).is_err());
        assert!(BandwidthGrid::new(0.1, 0.5, 1).is_err());
    }

    #[test]
    fn fit_hand_example() {
        let y = [0.0, 1.0, 0.0, 1.0, 0.0];
        let f = priestley_chao_fit(&y, 0.25).unwrap();
        // mpmath: (0.27 + 0.27) / (0.27 + 0.75 + 0.27)
        assert!((f[2] - 0.418_604_651_162_790_7).abs() < 1e-15);
        assert!(
            (priestley_chao_at(&y, 0.25, 0.6).unwrap() - 0.418_604_651_162_790_7).abs() < 1e-15
        );
    }

    #[test]
    fn fit_rejects_bad_args() {
        assert!(priestley_chao_fit(&[1.0, 2.0], 0.1).is_err());
        assert!(priestley_chao_fit(&[1.0; 10], 0.0).is_err());
        assert!(priestley_chao_fit(&[1.0; 10], 0.6).is_err());
        assert!(matches!(
            priestley_chao_at(&[1.0; 10], 0.01, 0.55),
            Err(Error::DegenerateWeights(_))
        ));
    }

    #[test]
    fn fit_second_order_convergence() {
        // interior sup error of a noiseless sine scales like h²
        let n = 2048;
        let y: Vec<f64> = (1..=n)
            .map(|i| (2.0 * PI * i as f64 / n as f64).sin())
            .collect();
        let mut consts = vec![];
        for h in [0.1, 0.05, 0.025] {
            let f = priestley_chao_fit(&y, h).unwrap();
            let err = (1..=n)
                .filter(|&i| {
                    let t = i as f64 / n as f64;
                    t > h && t < 1.0 - h
                })
                .map(|i| (f[i - 1] - y[i - 1]).abs())
                .fold(0.0, f64::max);
            consts.push(err / (h * h));
        }
        // bias ≈ h²·μ₂(K)/2·max|s''| = h²·0.1·4π²
        for c in &consts {
            assert!(
                (c - 0.4 * PI * PI).abs() / (0.4 * PI * PI) < 0.05,
                "{consts:?}"
            );
        }
    }

    #[test]
    fn autocovariance_examples() {
        let e = [1.0, -1.0, 1.0, -1.0];
        assert_eq!(autocovariance(&e, 0).unwrap(), 1.0);
        assert_eq!(autocovariance(&e, 1).unwrap(), -0.75);
        let e = [0.3, 2.0, -1.0, 4.0, 1.5];
        assert_eq!(autocovariance(&e, 4).unwrap(), 0.3 * 1.5 / 5.0);
        assert!(matches!(
            autocovariance(&e, 5),
            Err(Error::LagOutOfRange { lag: 5, len: 5 })
        ));
    }

    #[test]
    fn lag_cutoff_rule() {
        assert_eq!(lag_cutoff(441, 0.1), 6);
        assert_eq!(lag_cutoff(100, 0.001), 1);
        assert_eq!(lag_cutoff(16, 0.5), 2);
        assert_eq!(lag_cutoff(20, 0.5), 3);
    }

    #[test]
    fn cv_zero_residuals() {
        let y = vec![2.5; 64];
        assert_eq!(cv_objective(&y, 0.2, 3).unwrap(), 0.0);
        assert!(cv_objective(&y, 0.2, 0).is_err());
        assert!(cv_objective(&y, 0.2, 17).is_err());
    }

    #[test]
    fn cv_guard_marks_tiny_bandwidth_invalid() {
        let y: Vec<f64> = (0..32).map(|i| (i as f64).sin()).collect();
        // nh = 0.64 -> factor 1 - 0.75/0.64 < 0
        assert_eq!(cv_objective(&y, 0.02, 1).unwrap(), f64::INFINITY);
    }

    #[test]
    fn all_invalid_grid_is_error() {
        let y: Vec<f64> = (0..32).map(|i| (i as f64).sin()).collect();
        assert_eq!(
            select_bandwidth_from(&y, &[0.005, 0.01], CvCorrection::Dependent),
            Err(Error::DegenerateCorrection)
        );
        assert!(select_bandwidth_from(&y[..10], &[0.2], CvCorrection::Dependent).is_err());
    }

    #[test]
    fn selection_is_grid_argmin() {
        let y: Vec<f64> = (0..200)
            .map(|i| (i as f64 * 0.05).sin() + 0.3 * ((i * 7919 % 13) as f64 / 13.0 - 0.5))
            .collect();
        let fit = select_bandwidth(&y, None, &BandwidthGrid::default()).unwrap();
        let min = fit
            .cv_curve
            .iter()
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min);
        let first = fit.cv_curve.iter().find(|p| p.1 == min).unwrap();
        assert_eq!(first.0, fit.h_hat);
        assert_eq!(fit.fitted.len(), y.len());
        assert_eq!(fit.residuals.len(), y.len());
        assert_eq!(fit.m_lags, lag_cutoff(200, fit.h_hat));
    }

    proptest! {
        #[test]
        fn reproduces_constants(c in -1e3f64..1e3, n in 3usize..300, h in 0.001f64..0.5) {
            let f = priestley_chao_fit(&vec![c; n], h).unwrap();
            for v in f {
                prop_assert!((v - c).abs() <= 1e-12 * c.abs().max(1.0));
            }
        }

        #[test]
        fn linear_in_data(y in prop::collection::vec(-10f64..10.0, 20..80),
                          a in -3f64..3.0, b in -3f64..3.0, h in 0.01f64..0.5) {
            let z: Vec<f64> = y.iter().rev().map(|v| v * 0.5 + 1.0).collect();
            let comb: Vec<f64> = y.iter().zip(&z).map(|(p, q)| a * p + b * q).collect();
            let fy = priestley_chao_fit(&y, h).unwrap();
            let fz = priestley_chao_fit(&z, h).unwrap();
            let fc = priestley_chao_fit(&comb, h).unwrap();
            for i in 0..y.len() {
                prop_assert!((fc[i] - (a * fy[i] + b * fz[i])).abs() < 1e-10);
            }
        }

        #[test]
        fn rho_zero_is_one(e in prop::collection::vec(-5f64..5.0, 2..100)) {
            prop_assume!(e.iter().any(|v| *v != 0.0));
            let g0 = autocovariance(&e, 0).unwrap();
            prop_assert_eq!(g0 / g0, 1.0);
            for j in 0..e.len() {
                prop_assert!(autocovariance(&e, j).unwrap().is_finite());
            }
        }
    }
}
