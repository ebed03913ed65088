//! Invariant-density estimators on pre-averaged observations.
//!
//! `nu_hat` is the kernel estimator on block means; it targets the blurred
//! density `μ̄ * φ_τ̃` rather than `μ̄` itself. `mu_hat` removes the Gaussian
//! blur by combining shifted evaluations,
//!
//! ```text
//! μ̂(x) = Σ_{γ ∈ {0..l}^d} u_γ ν̂(x + γ τ̃),    u_γ = ∏_i u_{γ_i},
//! ```
//!
//! where the weight vector `u` is the first column of the inverse of the
//! Gaussian moment matrix `A`, computed here in exact integer/rational
//! arithmetic. The determinant identity `det A = ∏_{0≤k<i≤l} (i-k)` is
//! verified during construction.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::kernels::{CoordKernel, ProductKernel};
use crate::preaverage::PreaveragedSample;
use crate::quad::{adaptive_simpson, KahanSum};
use crate::sim::{DiffusionModel, ObservationSeries};

/// Which estimator produced a [`DensityEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Naive,
    Preaveraged,
    Debiased,
}

/// A pointwise density estimate together with the configuration snapshot
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub value: f64,
    pub kind: EstimatorKind,
    pub point: Vec<f64>,
    pub block_size: usize,
    pub bandwidths: Vec<f64>,
    pub order: Option<usize>,
    pub tau_tilde: Option<f64>,
}

/// Largest debiasing order with exact-arithmetic headroom.
pub const MAX_DEBIAS_ORDER: usize = 12;

/// Debiasing weights `u` and their defining moment matrix `A`.
#[derive(Debug, Clone)]
pub struct DebiasWeights {
    order: usize,
    moments: Vec<BigInt>,
    matrix: Vec<Vec<BigInt>>,
    determinant: BigInt,
    weights_exact: Vec<BigRational>,
    weights: Vec<f64>,
    l1_norm: f64,
}

impl DebiasWeights {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Gaussian moments `m_0..m_{2l}` (`(j-1)!!` for even `j`, zero odd).
    pub fn moments(&self) -> &[BigInt] {
        &self.moments
    }

    /// The `(l+1) × (l+1)` moment matrix `A`.
    pub fn matrix(&self) -> &[Vec<BigInt>] {
        &self.matrix
    }

    pub fn determinant(&self) -> &BigInt {
        &self.determinant
    }

    /// Exact weights (first column of `A^{-1}`).
    pub fn weights_exact(&self) -> &[BigRational] {
        &self.weights_exact
    }

    /// Double-precision weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ_i |u_i|` for one coordinate.
    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }

    /// `Σ_γ |u_γ|` over the full multi-index lattice `{0..l}^d`.
    pub fn l1_norm_multi(&self, dim: usize) -> f64 {
        self.l1_norm.powi(dim as i32)
    }
}

fn binomial(n: usize, k: usize) -> BigInt {
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for j in 0..k.min(n - k) {
        num *= BigInt::from(n - j);
        den *= BigInt::from(j + 1);
    }
    num / den
}

/// `m_j`: the j-th moment of a standard Gaussian, `(j-1)!!` for even `j`.
fn gaussian_moment(j: usize) -> BigInt {
    if j % 2 == 1 {
        return BigInt::zero();
    }
    let mut v = BigInt::one();
    let mut k = 1;
    while k < j {
        v *= BigInt::from(k);
        k += 2;
    }
    v
}

/// Fraction-free (Bareiss) determinant of an integer matrix.
fn bareiss_determinant(mut m: Vec<Vec<BigInt>>) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut sign = 1i32;
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if m[k][k].is_zero() {
            let swap = (k + 1..n).find(|&r| !m[r][k].is_zero());
            match swap {
                Some(r) => {
                    m.swap(k, r);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let t = &m[i][j] * &m[k][k] - &m[i][k] * &m[k][j];
                m[i][j] = t / &prev; // exact by the Bareiss identity
            }
            m[i][k] = BigInt::zero();
        }
        prev = m[k][k].clone();
    }
    let det = m[n - 1][n - 1].clone();
    if sign < 0 {
        -det
    } else {
        det
    }
}

/// Exact solve of `A u = e_0` by rational Gaussian elimination.
fn solve_first_column(a: &[Vec<BigInt>]) -> Result<Vec<BigRational>> {
    let n = a.len();
    let mut m: Vec<Vec<BigRational>> = a
        .iter()
        .map(|row| row.iter().map(|v| BigRational::from(v.clone())).collect())
        .collect();
    let mut rhs: Vec<BigRational> = vec![BigRational::zero(); n];
    rhs[0] = BigRational::one();

    for k in 0..n {
        let pivot_row = (k..n)
            .find(|&r| !m[r][k].is_zero())
            .ok_or_else(|| Error::Numerical("moment matrix is singular".into()))?;
        m.swap(k, pivot_row);
        rhs.swap(k, pivot_row);
        let pivot = m[k][k].clone();
        for i in k + 1..n {
            if m[i][k].is_zero() {
                continue;
            }
            let factor = &m[i][k] / &pivot;
            for j in k..n {
                let t = &m[k][j] * &factor;
                m[i][j] -= t;
            }
            let t = &rhs[k] * &factor;
            rhs[i] -= t;
        }
    }
    let mut u = vec![BigRational::zero(); n];
    for k in (0..n).rev() {
        let mut acc = rhs[k].clone();
        for j in k + 1..n {
            acc -= &m[k][j] * &u[j];
        }
        u[k] = acc / &m[k][k];
    }
    Ok(u)
}

/// Build the debiasing weights of order `l`.
pub fn debias_weights(l: usize) -> Result<DebiasWeights> {
    if l < 1 {
        return Err(Error::invalid("debias order must be >= 1"));
    }
    if l > MAX_DEBIAS_ORDER {
        return Err(Error::invalid(format!(
            "debias order {l} exceeds the exact-arithmetic cap {MAX_DEBIAS_ORDER}"
        )));
    }
    let moments: Vec<BigInt> = (0..=2 * l).map(gaussian_moment).collect();
    let mut matrix = vec![vec![BigInt::zero(); l + 1]; l + 1];
    for (k, row) in matrix.iter_mut().enumerate() {
        for (i, entry) in row.iter_mut().enumerate() {
            let mut acc = BigInt::zero();
            for j in 0..=k {
                let term =
                    binomial(k, j) * &moments[j] * BigInt::from(i).pow((k - j) as u32);
                if j % 2 == 0 {
                    acc += term;
                } else {
                    acc -= term;
                }
            }
            *entry = acc;
        }
    }

    let determinant = bareiss_determinant(matrix.clone());
    let mut expected = BigInt::one();
    for k in 0..=l {
        for i in k + 1..=l {
            expected *= BigInt::from(i - k);
        }
    }
    if determinant != expected {
        return Err(Error::Numerical(format!(
            "determinant {determinant} does not match the factorial product {expected}"
        )));
    }

    let weights_exact = solve_first_column(&matrix)?;

    // A·u = e_0, exactly.
    for (k, row) in matrix.iter().enumerate() {
        let mut acc = BigRational::zero();
        for (i, entry) in row.iter().enumerate() {
            acc += BigRational::from(entry.clone()) * &weights_exact[i];
        }
        let target = if k == 0 { BigRational::one() } else { BigRational::zero() };
        if acc != target {
            return Err(Error::Numerical(format!("A·u deviates from e_0 in row {k}")));
        }
    }

    let weights: Vec<f64> = weights_exact
        .iter()
        .map(|w| w.to_f64().ok_or_else(|| Error::Numerical("weight overflow".into())))
        .collect::<Result<_>>()?;
    let l1_norm = weights_exact.iter().map(|w| w.abs().to_f64().unwrap_or(f64::NAN)).sum();

    Ok(DebiasWeights { order: l, moments, matrix, determinant, weights_exact, weights, l1_norm })
}

/// Kernel mean over block means: `n_p^{-1} Σ_k K(x - Ȳ_k)`.
pub fn nu_hat_value(sample: &PreaveragedSample, kernel: &impl CoordKernel, x: &[f64]) -> f64 {
    debug_assert_eq!(kernel.dims(), sample.dim());
    debug_assert_eq!(x.len(), sample.dim());
    let d = sample.dim();
    let mut diff = vec![0.0; d];
    let mut acc = KahanSum::new();
    for k in 0..sample.count() {
        let b = sample.block(k);
        for j in 0..d {
            diff[j] = x[j] - b[j];
        }
        acc.add(kernel.eval(&diff));
    }
    acc.value() / sample.count() as f64
}

/// Pre-averaged kernel estimator `ν̂(x)`.
pub fn nu_hat(sample: &PreaveragedSample, pk: &ProductKernel, x: &[f64]) -> DensityEstimate {
    DensityEstimate {
        value: nu_hat_value(sample, pk, x),
        kind: EstimatorKind::Preaveraged,
        point: x.to_vec(),
        block_size: sample.block_size(),
        bandwidths: pk.bandwidths().to_vec(),
        order: Some(pk.base().order()),
        tau_tilde: Some(sample.tau_tilde()),
    }
}

/// Debiased estimator `μ̂(x) = Σ_γ u_γ ν̂(x + γ τ̃)`.
///
/// The lattice sum factorises over coordinates, so the implementation makes a
/// single pass over the blocks and combines the `l+1` shifted one-dimensional
/// kernel values per coordinate, instead of issuing `(l+1)^d` separate
/// estimator calls.
pub fn mu_hat_value(
    sample: &PreaveragedSample,
    kernel: &impl CoordKernel,
    weights: &DebiasWeights,
    x: &[f64],
) -> Result<f64> {
    let d = sample.dim();
    debug_assert_eq!(kernel.dims(), d);
    debug_assert_eq!(x.len(), d);
    let l = weights.order();
    let lattice = ((l + 1) as f64).powi(d as i32);
    if lattice > 1e6 {
        return Err(Error::Dimensionality(format!(
            "debias lattice (l+1)^d = {lattice:.3e} exceeds 1e6"
        )));
    }
    let tau = sample.tau_tilde();
    let u = weights.weights();
    let mut acc = KahanSum::new();
    for k in 0..sample.count() {
        let b = sample.block(k);
        let mut prod = 1.0;
        for j in 0..d {
            let base = x[j] - b[j];
            let mut coord = 0.0;
            for (c, &w) in u.iter().enumerate() {
                coord += w * kernel.eval_coord(j, base + c as f64 * tau);
            }
            prod *= coord;
            if prod == 0.0 {
                break;
            }
        }
        acc.add(prod);
    }
    Ok(acc.value() / sample.count() as f64)
}

/// Debiased estimator, with configuration snapshot.
pub fn mu_hat(
    sample: &PreaveragedSample,
    pk: &ProductKernel,
    weights: &DebiasWeights,
    x: &[f64],
) -> Result<DensityEstimate> {
    Ok(DensityEstimate {
        value: mu_hat_value(sample, pk, weights, x)?,
        kind: EstimatorKind::Debiased,
        point: x.to_vec(),
        block_size: sample.block_size(),
        bandwidths: pk.bandwidths().to_vec(),
        order: Some(weights.order()),
        tau_tilde: Some(sample.tau_tilde()),
    })
}

/// The naive kernel estimator on raw observations, `n^{-1} Σ_{k<n} K(x-Y_k)`.
/// It estimates the density of `Y`, not of `X`; kept as a baseline.
pub fn naive_kb(series: &ObservationSeries, pk: &ProductKernel, x: &[f64]) -> DensityEstimate {
    let d = series.dim();
    debug_assert_eq!(x.len(), d);
    let n = series.scheme.n;
    let mut diff = vec![0.0; d];
    let mut acc = KahanSum::new();
    for k in 0..n {
        let y = series.observed_point(k);
        for j in 0..d {
            diff[j] = x[j] - y[j];
        }
        acc.add(pk.eval(&diff));
    }
    DensityEstimate {
        value: acc.value() / n as f64,
        kind: EstimatorKind::Naive,
        point: x.to_vec(),
        block_size: 1,
        bandwidths: pk.bandwidths().to_vec(),
        order: Some(pk.base().order()),
        tau_tilde: Some(series.scheme.tau),
    }
}

/// The blurred target `(μ̄ * φ_τ)(x)`, computed by nested adaptive quadrature
/// of the analytic density against the Gaussian kernel. Serves as the
/// sampling-free oracle for the debiasing tests.
pub fn smoothed_target(model: &DiffusionModel, tau: f64, x: &[f64]) -> Result<f64> {
    if !model.has_analytic_density() {
        return Err(Error::Unsupported(
            "smoothed_target requires a model with an analytic invariant density".into(),
        ));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("tau must be nonnegative, got {tau}")));
    }
    if x.len() != model.dimension() {
        return Err(Error::invalid("evaluation point has the wrong dimension"));
    }
    if tau == 0.0 {
        return Ok(model.analytic_density(x).expect("checked above"));
    }
    Ok(gaussian_convolution(model, tau, x, &[]))
}

fn gaussian_convolution(model: &DiffusionModel, tau: f64, x: &[f64], prefix: &[f64]) -> f64 {
    let d = x.len();
    if prefix.len() == d {
        let mut point = vec![0.0; d];
        let mut phi = 1.0;
        for j in 0..d {
            point[j] = x[j] - tau * prefix[j];
            phi *= (-0.5 * prefix[j] * prefix[j]).exp()
                / (2.0 * std::f64::consts::PI).sqrt();
        }
        return model.analytic_density(&point).expect("density present") * phi;
    }
    let level = prefix.len();
    adaptive_simpson(
        |t| {
            let mut inner = prefix.to_vec();
            inner.push(t);
            gaussian_convolution(model, tau, x, &inner)
        },
        -9.0,
        9.0,
        1e-10 / (level as f64 + 1.0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::make_order_kernel;
    use crate::preaverage::preaverage;
    use crate::quad::integrate_gl64;
    use crate::sim::{simulate_ou_exact, InitialState, ObservationScheme};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn sample_from(values: &[f64], p: usize, tau: f64, delta: f64) -> PreaveragedSample {
        let n = values.len() - 1;
        let scheme = ObservationScheme::new(n, delta, tau, 0).unwrap();
        let series =
            ObservationSeries::from_parts(scheme, 1, values.to_vec(), values.to_vec()).unwrap();
        preaverage(&series, p).unwrap()
    }

    #[test]
    fn weights_order_one() {
        let w = debias_weights(1).unwrap();
        assert_eq!(w.matrix()[0], vec![BigInt::from(1), BigInt::from(1)]);
        assert_eq!(w.matrix()[1], vec![BigInt::from(0), BigInt::from(1)]);
        assert_eq!(w.determinant(), &BigInt::from(1));
        assert_eq!(w.weights(), &[1.0, 0.0]);
    }

    #[test]
    fn weights_order_two() {
        let w = debias_weights(2).unwrap();
        let m: Vec<Vec<i64>> = w
            .matrix()
            .iter()
            .map(|row| row.iter().map(|v| v.to_i64().unwrap()).collect())
            .collect();
        assert_eq!(m, vec![vec![1, 1, 1], vec![0, 1, 2], vec![1, 2, 5]]);
        assert_eq!(w.determinant(), &BigInt::from(2));
        assert_eq!(w.weights(), &[0.5, 1.0, -0.5]);
        assert_abs_diff_eq!(w.l1_norm(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn determinant_identity_and_exact_solve_up_to_cap() {
        for l in 1..=8usize {
            let w = debias_weights(l).unwrap();
            let mut expected = BigInt::one();
            for k in 0..=l {
                for i in k + 1..=l {
                    expected *= BigInt::from(i - k);
                }
            }
            assert_eq!(w.determinant(), &expected, "l = {l}");
            // k = 0 row of A is all ones, so the weights sum to one exactly.
            let sum: BigRational = w.weights_exact().iter().cloned().sum();
            assert_eq!(sum, BigRational::one());
            // double round-trip
            for (f, e) in w.weights().iter().zip(w.weights_exact()) {
                let back = BigRational::from_float(*f).unwrap();
                let rel = ((back - e).abs() / e.abs().max(BigRational::one()))
                    .to_f64()
                    .unwrap();
                assert!(rel < 1e-14, "l = {l}");
            }
        }
        assert!(debias_weights(0).is_err());
        assert!(debias_weights(13).is_err());
    }

    #[test]
    fn nu_hat_hand_values() {
        let base = make_order_kernel(2).unwrap();
        // single block located at x
        let s = sample_from(&[0.7, 123.0], 1, 0.0, 0.1);
        let pk = ProductKernel::new(base.clone(), vec![0.25]).unwrap();
        let est = nu_hat(&s, &pk, &[0.7]);
        assert_relative_eq!(est.value, 0.5 / 0.25, epsilon = 1e-12);

        // uniform kernel, blocks {-0.5, 0.5, 10}, h = 1, x = 0 -> 1/3
        let s = sample_from(&[-0.5, 0.5, 10.0, 0.0], 1, 0.0, 0.1);
        let pk = ProductKernel::new(base, vec![1.0]).unwrap();
        let est = nu_hat(&s, &pk, &[0.0]);
        assert_relative_eq!(est.value, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn nu_hat_translation_equivariance() {
        let base = make_order_kernel(4).unwrap();
        let pk = ProductKernel::new(base, vec![0.8]).unwrap();
        let vals = [0.1, -0.4, 0.9, 2.0, -1.3, 0.2, 0.5];
        let shift = 3.25;
        let shifted: Vec<f64> = vals.iter().map(|v| v + shift).collect();
        let a = nu_hat_value(&sample_from(&vals, 2, 0.0, 0.1), &pk, &[0.3]);
        let b = nu_hat_value(&sample_from(&shifted, 2, 0.0, 0.1), &pk, &[0.3 + shift]);
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn naive_equals_nu_hat_at_p_one_and_vanishes_far_away() {
        let scheme = ObservationScheme::new(256, 0.01, 0.0, 5).unwrap();
        let series = simulate_ou_exact(0.5, 1, &scheme, InitialState::Stationary).unwrap();
        let noisy = crate::sim::add_noise(&series, 0.5, 5).unwrap();
        let base = make_order_kernel(2).unwrap();
        let pk = ProductKernel::new(base, vec![0.3]).unwrap();
        let sample = preaverage(&noisy, 1).unwrap();
        for x in [-1.0, 0.0, 0.7] {
            assert_relative_eq!(
                naive_kb(&noisy, &pk, &[x]).value,
                nu_hat_value(&sample, &pk, &[x]),
                epsilon = 1e-13
            );
        }
        assert_eq!(naive_kb(&noisy, &pk, &[1e6]).value, 0.0);
    }

    /// Reference implementation of `μ̂` by explicit lattice enumeration.
    fn mu_hat_lattice(
        sample: &PreaveragedSample,
        kernel: &impl CoordKernel,
        weights: &DebiasWeights,
        x: &[f64],
    ) -> f64 {
        let d = sample.dim();
        let l = weights.order();
        let mut gamma = vec![0usize; d];
        let mut total = 0.0;
        loop {
            let w: f64 = gamma.iter().map(|&g| weights.weights()[g]).product();
            let shifted: Vec<f64> = x
                .iter()
                .zip(gamma.iter())
                .map(|(&xi, &g)| xi + g as f64 * sample.tau_tilde())
                .collect();
            total += w * nu_hat_value(sample, kernel, &shifted);
            let mut j = 0;
            loop {
                if j == d {
                    return total;
                }
                gamma[j] += 1;
                if gamma[j] <= l {
                    break;
                }
                gamma[j] = 0;
                j += 1;
            }
        }
    }

    #[test]
    fn mu_hat_degenerate_cases() {
        let base = make_order_kernel(2).unwrap();
        let pk = ProductKernel::new(base, vec![0.5]).unwrap();
        let s = sample_from(&[0.2, -0.3, 0.8, 0.1, -0.6, 0.0], 1, 0.0, 0.1);

        // l = 1 weights are (1, 0): debiasing is the identity
        let w1 = debias_weights(1).unwrap();
        for x in [-0.5, 0.0, 0.4] {
            assert_relative_eq!(
                mu_hat_value(&s, &pk, &w1, &[x]).unwrap(),
                nu_hat_value(&s, &pk, &[x]),
                epsilon = 1e-14
            );
        }

        // tau_tilde = 0 collapses all shifts; weights sum to one
        let w2 = debias_weights(2).unwrap();
        assert_eq!(s.tau_tilde(), 0.0);
        for x in [-0.5, 0.0, 0.4] {
            assert_relative_eq!(
                mu_hat_value(&s, &pk, &w2, &[x]).unwrap(),
                nu_hat_value(&s, &pk, &[x]),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn mu_hat_order_two_shift_formula() {
        let base = make_order_kernel(2).unwrap();
        let pk = ProductKernel::new(base, vec![0.4]).unwrap();
        let s = sample_from(&[0.2, -0.3, 0.8, 0.1, -0.6, 0.5, -0.2, 0.9, 1.1], 2, 1.0, 0.05);
        let t = s.tau_tilde();
        assert!(t > 0.0);
        let w = debias_weights(2).unwrap();
        for x in [-0.4, 0.0, 0.3] {
            let expected = 0.5 * nu_hat_value(&s, &pk, &[x])
                + nu_hat_value(&s, &pk, &[x + t])
                - 0.5 * nu_hat_value(&s, &pk, &[x + 2.0 * t]);
            assert_relative_eq!(
                mu_hat_value(&s, &pk, &w, &[x]).unwrap(),
                expected,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn shared_work_path_matches_lattice_enumeration() {
        let scheme = ObservationScheme::new(300, 0.02, 1.0, 9).unwrap();
        let series = simulate_ou_exact(0.5, 2, &scheme, InitialState::Stationary).unwrap();
        let noisy = crate::sim::add_noise(&series, 1.0, 9).unwrap();
        let s = preaverage(&noisy, 4).unwrap();
        let base = make_order_kernel(4).unwrap();
        let pk = ProductKernel::new(base, vec![0.5, 0.9]).unwrap();
        let w = debias_weights(3).unwrap();
        for x in [[0.0, 0.0], [0.4, -0.2], [-1.0, 0.5]] {
            let fast = mu_hat_value(&s, &pk, &w, &x).unwrap();
            let slow = mu_hat_lattice(&s, &pk, &w, &x);
            assert_abs_diff_eq!(fast, slow, epsilon = 1e-12);
        }
    }

    #[test]
    fn lattice_size_guard() {
        let scheme = ObservationScheme::new(32, 0.02, 1.0, 9).unwrap();
        let series = simulate_ou_exact(0.5, 8, &scheme, InitialState::Stationary).unwrap();
        let s = preaverage(&series, 1).unwrap();
        let base = make_order_kernel(2).unwrap();
        let pk = ProductKernel::new(base, vec![1.0; 8]).unwrap();
        // (5+1)^8 = 1 679 616 > 1e6
        let w = debias_weights(5).unwrap();
        let err = mu_hat_value(&s, &pk, &w, &[0.0; 8]).unwrap_err();
        assert!(matches!(err, Error::Dimensionality(_)));
    }

    #[test]
    fn nu_hat_integrates_to_one() {
        // Piecewise-polynomial exact integration: split at every kernel
        // support breakpoint and apply Gauss-Legendre on each piece.
        let scheme = ObservationScheme::new(200, 0.05, 0.5, 77).unwrap();
        let series = simulate_ou_exact(0.5, 1, &scheme, InitialState::Stationary).unwrap();
        let noisy = crate::sim::add_noise(&series, 0.5, 77).unwrap();
        let s = preaverage(&noisy, 2).unwrap();
        let base = make_order_kernel(4).unwrap();
        let h = 0.35;
        let pk = ProductKernel::new(base, vec![h]).unwrap();

        let mut cuts: Vec<f64> = Vec::new();
        for k in 0..s.count() {
            cuts.push(s.block(k)[0] - h);
            cuts.push(s.block(k)[0] + h);
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let mut total = 0.0;
        for wnd in cuts.windows(2) {
            total += integrate_gl64(|x| nu_hat_value(&s, &pk, &[x]), wnd[0], wnd[1]);
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn smoothed_target_closed_forms() {
        let model = DiffusionModel::ou(0.5, 1).unwrap();
        // tau = 0 returns the density itself
        assert_relative_eq!(
            smoothed_target(&model, 0.0, &[0.3]).unwrap(),
            model.analytic_density(&[0.3]).unwrap(),
            epsilon = 1e-15
        );
        // N(0,1) * N(0, 0.25) = N(0, 1.25)
        let v = smoothed_target(&model, 0.5, &[0.0]).unwrap();
        assert_abs_diff_eq!(v, 0.356825, epsilon = 1e-6);
        let closed = 1.0 / (2.0 * std::f64::consts::PI * 1.25).sqrt();
        assert_relative_eq!(v, closed, epsilon = 1e-9);
        // symmetry for even potentials
        let a = smoothed_target(&model, 0.3, &[0.8]).unwrap();
        let b = smoothed_target(&model, 0.3, &[-0.8]).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-9);
    }

    #[test]
    fn smoothed_target_requires_analytic_density() {
        let bare = DiffusionModel::new(1, |x, out| out[0] = -x[0], |x| 0.5 * x[0] * x[0]).unwrap();
        assert!(matches!(
            smoothed_target(&bare, 0.1, &[0.0]),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn debias_combination_beats_raw_smoothing_near_the_mode() {
        // Quadrature-only comparison on the standard normal target. The
        // improvement is pointwise at 0 and 0.5; near 1.0 the raw blur error
        // changes sign and the comparison degenerates (see the acceptance
        // suite for the full matrix).
        let model = DiffusionModel::ou(0.5, 1).unwrap();
        let w = debias_weights(2).unwrap();
        for tau in [0.2, 0.3, 0.5] {
            for x in [0.0, 0.5] {
                let target = model.analytic_density(&[x]).unwrap();
                let raw = smoothed_target(&model, tau, &[x]).unwrap();
                let mut combo = 0.0;
                for (c, &u) in w.weights().iter().enumerate() {
                    combo += u * smoothed_target(&model, tau, &[x + c as f64 * tau]).unwrap();
                }
                assert!(
                    (combo - target).abs() < (raw - target).abs(),
                    "tau={tau} x={x}: |{:.3e}| !< |{:.3e}|",
                    combo - target,
                    raw - target
                );
            }
        }
    }
}
