//! Scratch calibration for the adaptive-selection acceptance run (ignored by
//! default; run with --ignored --nocapture).

use ergodens::adaptive::{build_grid, gl_select, GlConfig, GlEstimator};
use ergodens::estimator::{debias_weights, mu_hat_value, nu_hat_value};
use ergodens::hyperparams::{choose_p, PMode};
use ergodens::kernels::{make_order_kernel, ProductKernel};
use ergodens::preaverage::preaverage;
use ergodens::rng::derive_seed;
use ergodens::sim::{add_noise, simulate_ou_exact, InitialState, ObservationScheme};

#[test]
#[ignore]
fn sweep_omega_bar() {
    let n = 1 << 14;
    let tau = 0.25;
    let target = (2.0 * std::f64::consts::PI).powf(-1.5);
    let base = make_order_kernel(2).unwrap();
    let weights = debias_weights(2).unwrap();
    let x = [0.0; 3];

    for estimator in [GlEstimator::Debiased, GlEstimator::Plain] {
        println!("=== estimator {estimator:?}");
        for seed in [42u64, 100, 101, 102, 103, 104, 105, 106, 107] {
            let scheme = ObservationScheme::new(n, 2f64.powi(-7), tau, derive_seed(seed, 0)).unwrap();
            let latent = simulate_ou_exact(0.5, 3, &scheme, InitialState::Stationary).unwrap();
            let noisy = add_noise(&latent, tau, scheme.seed).unwrap();
            let p = choose_p(tau, scheme.delta, 2.0, PMode::Numeric).unwrap();
            let sample = preaverage(&noisy, p).unwrap();
            let grid = build_grid(sample.count(), scheme.horizon(), 3).unwrap();

            let mut errs = Vec::new();
            for h in grid.candidates() {
                let pk = ProductKernel::new(base.clone(), h.clone()).unwrap();
                let est = match estimator {
                    GlEstimator::Debiased => mu_hat_value(&sample, &pk, &weights, &x).unwrap(),
                    GlEstimator::Plain => nu_hat_value(&sample, &pk, &x),
                };
                errs.push((est - target) * (est - target));
            }
            let best = errs.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut line = format!("seed {seed}: best {best:.2e} |");
            for omega in [4.0, 0.1, 0.01, 0.003, 0.001, 0.0003, 0.0001] {
                let cfg = GlConfig { omega_bar: omega, estimator };
                let (_, state) = gl_select(&sample, &grid, &base, &weights, &x, &cfg).unwrap();
                let ratio = errs[state.selected_index] / best;
                line.push_str(&format!(" w={omega}: i={} r={ratio:.1} |", state.selected_index));
            }
            println!("{line}");
        }
    }
}
