//! Pre-averaging of noisy observations.
//!
//! Blocks of `p` consecutive observations are replaced by their mean
//! `Ȳ_k = p^{-1} Σ_{l<p} Y_{kp+l}`, which divides the measurement-noise
//! variance by `p` at the cost of a Brownian time-aggregation blur. The
//! combined blur scale of the block means is the effective noise
//!
//! ```text
//! τ̃² = τ²/p + (p-1)(2p-1)Δ/(12p).
//! ```

use crate::error::{Error, Result};
use crate::quad::pairwise_sum;
use crate::sim::{ObservationScheme, ObservationSeries};

/// Block means of an observation series together with the effective noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PreaveragedSample {
    block_size: usize,
    count: usize,
    dim: usize,
    blocks: Vec<f64>,
    tau_tilde: f64,
    scheme: ObservationScheme,
}

impl PreaveragedSample {
    /// Block size `p`.
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Number of blocks `n_p = ⌊n/p⌋`.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Effective noise scale `τ̃` of the block means.
    pub fn tau_tilde(&self) -> f64 {
        self.tau_tilde
    }

    /// Originating sampling design.
    pub fn scheme(&self) -> &ObservationScheme {
        &self.scheme
    }

    pub fn block(&self, k: usize) -> &[f64] {
        &self.blocks[k * self.dim..(k + 1) * self.dim]
    }

    pub fn blocks(&self) -> &[f64] {
        &self.blocks
    }
}

/// Effective noise `τ̃ = sqrt(τ²/p + (p-1)(2p-1)Δ/(12p))`.
pub fn effective_noise(tau: f64, delta: f64, p: usize) -> f64 {
    debug_assert!(tau >= 0.0 && delta > 0.0 && p >= 1);
    let pf = p as f64;
    (tau * tau / pf + (pf - 1.0) * (2.0 * pf - 1.0) * delta / (12.0 * pf)).sqrt()
}

/// Collapse a series into non-overlapping block means of size `p`.
///
/// The trailing `n - p⌊n/p⌋` observations are discarded; block sums use
/// pairwise accumulation per coordinate. For `p = 1` the blocks are the raw
/// observations `Y_0..Y_{n-1}`.
pub fn preaverage(series: &ObservationSeries, p: usize) -> Result<PreaveragedSample> {
    let n = series.scheme.n;
    if p == 0 || p > n {
        return Err(Error::invalid(format!("block size must satisfy 1 <= p <= n = {n}, got {p}")));
    }
    let validity_cap = series.scheme.delta.powf(-0.5).ceil() as usize;
    if p > validity_cap {
        static VALIDITY_WARNING: std::sync::Once = std::sync::Once::new();
        VALIDITY_WARNING.call_once(|| {
            log::warn!(
                "block size p = {p} exceeds ceil(delta^-1/2) = {validity_cap}; \
                 outside the validity range of the bias bounds (warning shown once)"
            );
        });
    }
    let d = series.dim();
    let count = n / p;
    let mut blocks = Vec::with_capacity(count * d);
    let mut column = vec![0.0; p];
    for k in 0..count {
        for j in 0..d {
            for (l, slot) in column.iter_mut().enumerate() {
                *slot = series.observed_point(k * p + l)[j];
            }
            blocks.push(pairwise_sum(&column) / p as f64);
        }
    }
    Ok(PreaveragedSample {
        block_size: p,
        count,
        dim: d,
        blocks,
        tau_tilde: effective_noise(series.scheme.tau, series.scheme.delta, p),
        scheme: series.scheme,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_ou_exact, InitialState};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    /// Series with prescribed 1-D observations (latent = observed).
    fn series_from(values: &[f64], delta: f64, tau: f64) -> ObservationSeries {
        // values[0..=n]
        let n = values.len() - 1;
        let scheme = ObservationScheme::new(n, delta, tau, 0).unwrap();
        ObservationSeries::from_parts(scheme, 1, values.to_vec(), values.to_vec()).unwrap()
    }

    #[test]
    fn identity_at_p_one() {
        let s = series_from(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.1, 0.0);
        let pa = preaverage(&s, 1).unwrap();
        assert_eq!(pa.count(), 4);
        assert_eq!(pa.blocks(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(pa.tau_tilde(), 0.0);
    }

    #[test]
    fn hand_blocks() {
        // Y = (0, 2, 4, 6), p = 2 -> blocks (1, 5)
        let s = series_from(&[0.0, 2.0, 4.0, 6.0, 99.0], 0.1, 0.0);
        let pa = preaverage(&s, 2).unwrap();
        assert_eq!(pa.count(), 2);
        assert_eq!(pa.blocks(), &[1.0, 5.0]);
    }

    #[test]
    fn floor_rule_discards_remainder() {
        // n = 5 observations used (indices 0..4), p = 2 -> n_p = 2
        let s = series_from(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], 0.1, 0.0);
        let pa = preaverage(&s, 2).unwrap();
        assert_eq!(pa.count(), 2);
        assert_eq!(pa.blocks(), &[0.5, 2.5]);
    }

    #[test]
    fn rejects_oversized_blocks() {
        let s = series_from(&[0.0, 1.0, 2.0], 0.1, 0.0);
        assert!(preaverage(&s, 3).is_err());
        assert!(preaverage(&s, 0).is_err());
    }

    #[test]
    fn effective_noise_values() {
        // p = 1: tau exactly
        assert_eq!(effective_noise(0.7, 0.3, 1), 0.7);
        // tau = 0, p = 2, delta = 0.12: sqrt(3 * 0.12 / 24)
        assert_relative_eq!(effective_noise(0.0, 0.12, 2), 0.015f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(effective_noise(0.0, 0.12, 2), 0.1224745, epsilon = 1e-7);
        // the tau = 1, p = 11, delta = 2^-7 configuration
        let v = effective_noise(1.0, 2f64.powi(-7), 11);
        assert_abs_diff_eq!(v, 0.321463, epsilon = 1e-6);
    }

    #[test]
    fn effective_noise_monotonicity() {
        // tau = 0: nondecreasing in p; delta ~ 0: tau/sqrt(p), decreasing
        let delta = 0.05;
        let mut prev = effective_noise(0.0, delta, 1);
        for p in 2..=64 {
            let cur = effective_noise(0.0, delta, p);
            assert!(cur >= prev);
            prev = cur;
        }
        let mut prev = f64::INFINITY;
        for p in 1..=64 {
            let cur = effective_noise(2.0, 1e-300, p);
            assert!(cur < prev);
            assert_relative_eq!(cur, 2.0 / (p as f64).sqrt(), max_relative = 1e-10);
            prev = cur;
        }
    }

    #[test]
    fn block_mean_identity_when_p_divides_n() {
        let scheme = ObservationScheme::new(64, 0.01, 1.0, 3).unwrap();
        let latent = simulate_ou_exact(0.5, 2, &scheme, InitialState::Stationary).unwrap();
        let noisy = crate::sim::add_noise(&latent, 1.0, 3).unwrap();
        let pa = preaverage(&noisy, 8).unwrap();
        for j in 0..2 {
            let mean_blocks: f64 =
                (0..pa.count()).map(|k| pa.block(k)[j]).sum::<f64>() / pa.count() as f64;
            let mean_raw: f64 =
                (0..64).map(|i| noisy.observed_point(i)[j]).sum::<f64>() / 64.0;
            assert_relative_eq!(mean_blocks, mean_raw, epsilon = 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        // adding a constant to every observation shifts every block by it
        #[test]
        fn translation_equivariance(
            shift in -5.0f64..5.0,
            p in 1usize..6,
            values in prop::collection::vec(-10.0f64..10.0, 7..40),
        ) {
            let s = series_from(&values, 0.1, 0.0);
            let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
            let s2 = series_from(&shifted, 0.1, 0.0);
            let a = preaverage(&s, p).unwrap();
            let b = preaverage(&s2, p).unwrap();
            for k in 0..a.count() {
                prop_assert!((b.block(k)[0] - shift - a.block(k)[0]).abs() < 1e-12);
            }
        }
    }
}
