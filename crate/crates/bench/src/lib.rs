//! Shared fixtures for the criterion benchmarks.

use ergodens::preaverage::{preaverage, PreaveragedSample};
use ergodens::sim::{add_noise, simulate_ou_exact, InitialState, ObservationScheme, ObservationSeries};

/// Reference noisy series: 1-D model `V(x) = x²/4`, n = 2^14, Δ = 2^-7, τ = 1.
pub fn reference_series(dimension: usize) -> ObservationSeries {
    let scheme = ObservationScheme::new(1 << 14, 2f64.powi(-7), 1.0, 7).unwrap();
    let latent = simulate_ou_exact(0.5, dimension, &scheme, InitialState::Stationary).unwrap();
    add_noise(&latent, 1.0, scheme.seed).unwrap()
}

pub fn reference_sample(dimension: usize, p: usize) -> PreaveragedSample {
    preaverage(&reference_series(dimension), p).unwrap()
}
