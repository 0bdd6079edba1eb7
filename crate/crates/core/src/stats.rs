//! Closed-form scalar math: decibels, power, rate sequences and
//! order-statistic quantiles.

use crate::error::{Error, Result};
use crate::types::{DependenceRegime, QuantileLevel, SnrDb};

/// `10·log10(p_signal / p_noise)`.
pub fn snr_db(p_signal: f64, p_noise: f64) -> Result<SnrDb> {
    if !(p_signal > 0.0 && p_noise > 0.0) || !p_signal.is_finite() || !p_noise.is_finite() {
        return Err(Error::NonPositivePower {
            signal: p_signal,
            noise: p_noise,
        });
    }
    Ok(SnrDb(10.0 * (p_signal / p_noise).log10()))
}

/// Effective sample size `Λ_n` that sets the optimal bandwidth rate
/// `Λ_n^{-1/5}`.
pub fn lambda_n(n: usize, regime: DependenceRegime) -> f64 {
    debug_assert!(n >= 2);
    lambda_scale(n as f64, regime)
}

/// [`lambda_n`] on a real-valued size.
pub fn lambda_scale(n: f64, regime: DependenceRegime) -> f64 {
    match regime {
        DependenceRegime::Srd => n,
        DependenceRegime::Lrd { gamma1: 1.0 } => n / n.ln(),
        DependenceRegime::Lrd { gamma1 } => n.powf(gamma1),
    }
}

/// Convergence rate `τ_n` of the centered variance statistic.
pub fn tau_n(n: usize, regime: DependenceRegime) -> f64 {
    debug_assert!(n >= 2);
    tau_scale(n as f64, regime)
}

pub fn tau_scale(n: f64, regime: DependenceRegime) -> f64 {
    match regime {
        DependenceRegime::Srd => n.sqrt(),
        DependenceRegime::Lrd { gamma1 } if gamma1 > 0.5 => n.sqrt(),
        DependenceRegime::Lrd { gamma1: 0.5 } => (n / n.ln()).sqrt(),
        DependenceRegime::Lrd { gamma1 } => n.powf(gamma1),
    }
}

/// Mean of squares, the discrete analogue of `∫ s²(t) dt` over the unit
/// interval. Returns 0 for an empty slice.
pub fn signal_power(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Two-pass population variance (divisor `n`).
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// Lower empirical quantile `inf{x : F̂(x) >= level}`: the
/// `⌈level·K⌉`-th order statistic, without interpolation.
pub fn empirical_quantile(values: &[f64], level: QuantileLevel) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    if let Some(i) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, level))
}

/// Same as [`empirical_quantile`] on data already sorted ascending.
pub fn quantile_sorted(sorted: &[f64], level: QuantileLevel) -> f64 {
    sorted[order_statistic_index(sorted.len(), level.get())]
}

/// Zero-based index of the `⌈p·K⌉`-th order statistic.
pub(crate) fn order_statistic_index(k: usize, p: f64) -> usize {
    let prod = p * k as f64;
    // Guard against p·K landing a hair above an integer (0.95·100).
    let rounded = prod.round();
    let rank = if (prod - rounded).abs() <= 1e-9 * prod.max(1.0) {
        rounded
    } else {
        prod.ceil()
    };
    (rank as usize).clamp(1, k) - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(p: f64) -> QuantileLevel {
        QuantileLevel::new(p).unwrap()
    }

    #[test]
    fn snr_db_examples() {
        assert!((snr_db(1.0, 0.1).unwrap().0 - 10.0).abs() < 1e-12);
        assert_eq!(snr_db(0.5, 0.5).unwrap().0, 0.0);
        assert!(snr_db(0.0, 1.0).is_err());
        assert!(snr_db(1.0, -1.0).is_err());
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_n(1000, DependenceRegime::Srd), 1000.0);
        let e2 = std::f64::consts::E.powi(2);
        let lrd1 = DependenceRegime::Lrd { gamma1: 1.0 };
        assert!((lambda_scale(e2, lrd1) - 3.694_528_049_465_325).abs() < 1e-12);
        let lrd04 = DependenceRegime::Lrd { gamma1: 0.4 };
        assert!((lambda_n(100, lrd04) - 6.309_573_444_801_932).abs() < 1e-12);
    }

    #[test]
    fn tau_examples() {
        assert!((tau_n(100, DependenceRegime::Srd) - 10.0).abs() < 1e-12);
        let lrd04 = DependenceRegime::Lrd { gamma1: 0.4 };
        assert!((tau_n(100, lrd04) - 6.309_573_444_801_932).abs() < 1e-12);
        let lrd05 = DependenceRegime::Lrd { gamma1: 0.5 };
        assert!((tau_n(100, lrd05) - 4.659_906_017_846_561).abs() < 1e-12);
        let lrd08 = DependenceRegime::Lrd { gamma1: 0.8 };
        assert_eq!(tau_n(100, lrd08), 10.0);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(
            empirical_quantile(&[1.0, 2.0, 3.0, 4.0], q(0.5)).unwrap(),
            2.0
        );
        for p in [0.01, 0.5, 0.99] {
            assert_eq!(empirical_quantile(&[7.0], q(p)).unwrap(), 7.0);
        }
        assert_eq!(empirical_quantile(&[], q(0.5)), Err(Error::Empty));
    }

    #[test]
    fn power_examples() {
        assert_eq!(signal_power(&[1.0; 4]), 1.0);
        assert_eq!(signal_power(&[0.0; 3]), 0.0);
        // whole periods of a sine
        let n = 4000;
        let a = 1.7;
        let s: Vec<f64> = (0..n)
            .map(|i| a * (2.0 * std::f64::consts::PI * 5.0 * i as f64 / n as f64).sin())
            .collect();
        assert!((signal_power(&s) - a * a / 2.0).abs() < 1.0 / n as f64);
    }

    /// Brute-force inf-definition: smallest member x with #{v <= x}/K >= p.
    fn brute_quantile(values: &[f64], p: f64) -> f64 {
        let k = values.len() as f64;
        let mut candidates: Vec<f64> = values
            .iter()
            .copied()
            .filter(|&x| values.iter().filter(|&&v| v <= x).count() as f64 / k >= p)
            .collect();
        candidates.sort_by(f64::total_cmp);
        candidates[0]
    }

    #[test]
    fn quantile_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(37);
        let values: Vec<f64> = (0..100).map(|_| rng.random::<f64>() * 20.0 - 5.0).collect();
        assert_eq!(
            empirical_quantile(&values, q(0.37)).unwrap(),
            brute_quantile(&values, 0.37)
        );
    }

    proptest! {
        #[test]
        fn snr_scale_invariant_and_antisymmetric(p in 1e-6f64..1e6, r in 1e-6f64..1e6, a in 1e-3f64..1e3) {
            let base = snr_db(p, r).unwrap().0;
            prop_assert!((snr_db(a * p, a * r).unwrap().0 - base).abs() < 1e-9);
            prop_assert!((snr_db(r, p).unwrap().0 + base).abs() < 1e-9);
        }

        #[test]
        fn quantile_monotone_member_and_brute(values in prop::collection::vec(-1e3f64..1e3, 1..60),
                                               p1 in 0.001f64..0.999, p2 in 0.001f64..0.999) {
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let ql = empirical_quantile(&values, q(lo)).unwrap();
            let qh = empirical_quantile(&values, q(hi)).unwrap();
            prop_assert!(ql <= qh);
            prop_assert!(values.contains(&ql));
            prop_assert_eq!(ql, brute_quantile(&values, lo));
        }

        #[test]
        fn rates_monotone(n in 2usize..100_000, g in 0.01f64..1.0) {
            for regime in [DependenceRegime::Srd, DependenceRegime::Lrd { gamma1: g }, DependenceRegime::Lrd { gamma1: 0.5 }] {
                prop_assert!(lambda_n(n + 1, regime) >= lambda_n(n, regime) || n < 3);
                prop_assert!(tau_n(n + 1, regime) >= tau_n(n, regime) || n < 3);
            }
            let srd = DependenceRegime::Srd;
            prop_assert!((tau_n(n, srd) - lambda_n(n, srd).sqrt()).abs() < 1e-12 * n as f64);
        }

        #[test]
        fn power_sign_invariant(values in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            let flipped: Vec<f64> = values.iter().map(|v| -v).collect();
            prop_assert_eq!(signal_power(&values), signal_power(&flipped));
        }
    }
}
