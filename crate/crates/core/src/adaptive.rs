//! Data-driven bandwidth selection for `d ≥ 3`.
//!
//! For every candidate `h` in a dyadic grid, an auxiliary estimator with the
//! convolved kernel `K_h * K_η` is compared against the plain estimator at
//! `η`, for every `η` in the grid. The excess
//!
//! ```text
//! A(h) = max_η { |μ̂_(h,η)(x) - μ̂_η(x)|² - V(η) }₊
//! ```
//!
//! acts as a bias proxy, `V(h) = ω̄ log(n_p) v(h)` penalises the variance,
//! and the selected bandwidth minimises `A + V`. In dimensions 1 and 2 the
//! variance bound does not depend on the unknown smoothness, so there is
//! nothing to adapt; callers should use `hyperparams::bandwidth_star`.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::estimator::{mu_hat_value, nu_hat_value, DebiasWeights};
use crate::kernels::{ConvolvedKernel1D, ConvolvedProductKernel, CoordKernel, Kernel1D, ProductKernel};
use crate::preaverage::PreaveragedSample;

/// Dyadic bandwidth candidates, sorted vectors `h_1 ≤ … ≤ h_d` with every
/// entry in `[floor, 1]`, listed in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthGrid {
    candidates: Vec<Vec<f64>>,
    floor: f64,
    n_p: usize,
    t_n: f64,
}

impl BandwidthGrid {
    pub fn candidates(&self) -> &[Vec<f64>] {
        &self.candidates
    }

    /// Lower bandwidth bound `(log(n_p)³ / n_p)^{1/d}`.
    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Build the dyadic candidate grid for `d ≥ 3`.
///
/// Levels are the powers `2^{-j}` lying in `[floor, 1]`; candidates are all
/// nondecreasing `d`-tuples of levels. If that exceeds the cardinality cap
/// `⌊T_n⌋`, a deterministic stride subsample is kept.
pub fn build_grid(n_p: usize, t_n: f64, d: usize) -> Result<BandwidthGrid> {
    if d < 3 {
        return Err(Error::Unsupported(format!(
            "adaptive selection needs d >= 3 (got d = {d}); use hyperparams::bandwidth_star"
        )));
    }
    if n_p < 8 {
        return Err(Error::invalid(format!("need at least 8 blocks, got {n_p}")));
    }
    if !(t_n > 1.0) {
        return Err(Error::invalid(format!("horizon T = {t_n} must exceed 1")));
    }
    let floor = ((n_p as f64).ln().powi(3) / n_p as f64).powf(1.0 / d as f64);
    let mut levels = Vec::new();
    let mut level = 1.0f64;
    while level >= floor {
        levels.push(level);
        level *= 0.5;
    }
    if levels.is_empty() {
        // floor above one: fall back to the largest admissible bandwidth
        levels.push(1.0);
    }
    levels.reverse(); // ascending

    let mut candidates = Vec::new();
    let mut stack = vec![0usize; d];
    enumerate_sorted_tuples(&levels, &mut stack, 0, 0, &mut candidates);
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let cap = t_n.floor() as usize;
    if candidates.len() > cap && cap >= 1 {
        let total = candidates.len();
        let kept: Vec<Vec<f64>> =
            (0..cap).map(|i| candidates[i * total / cap].clone()).collect();
        candidates = kept;
    }

    Ok(BandwidthGrid { candidates, floor, n_p, t_n })
}

fn enumerate_sorted_tuples(
    levels: &[f64],
    stack: &mut Vec<usize>,
    depth: usize,
    start: usize,
    out: &mut Vec<Vec<f64>>,
) {
    let d = stack.len();
    if depth == d {
        out.push(stack.iter().map(|&i| levels[i]).collect());
        return;
    }
    for i in start..levels.len() {
        stack[depth] = i;
        enumerate_sorted_tuples(levels, stack, depth + 1, i, out);
    }
}

fn check_sorted_unit(h: &[f64]) -> Result<()> {
    if h.len() < 3 {
        return Err(Error::invalid("variance proxy requires d >= 3"));
    }
    for w in h.windows(2) {
        if w[0] > w[1] {
            return Err(Error::invalid(format!("bandwidths must be sorted ascending: {h:?}")));
        }
    }
    if h.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
        return Err(Error::invalid(format!("bandwidths must lie in (0, 1]: {h:?}")));
    }
    Ok(())
}

/// Variance proxy
/// `v(h) = T^{-1} ( pΔ ∏ h_i^{-1} + min(Σ|log h_i| ∏_{i≥3} h_i^{-1}, (h₂h₃)^{-1/2} ∏_{i≥4} h_i^{-1}) )`.
///
/// Requires `h` sorted ascending; the two-term minimum is the simplification
/// valid under that ordering.
pub fn variance_proxy(h: &[f64], p: usize, delta: f64, t_n: f64) -> Result<f64> {
    check_sorted_unit(h)?;
    if p == 0 || !(delta > 0.0) || !(t_n > 0.0) {
        return Err(Error::invalid("need p >= 1, delta > 0, T > 0"));
    }
    let inv_prod_all: f64 = h.iter().map(|v| 1.0 / v).product();
    let log_sum: f64 = h.iter().map(|v| v.ln().abs()).sum();
    let inv_prod_from3: f64 = h[2..].iter().map(|v| 1.0 / v).product();
    let term_log = log_sum * inv_prod_from3;
    let inv_prod_from4: f64 = h.get(3..).map_or(1.0, |t| t.iter().map(|v| 1.0 / v).product());
    let term_sqrt = (h[1] * h[2]).powf(-0.5) * inv_prod_from4;
    Ok((p as f64 * delta * inv_prod_all + term_log.min(term_sqrt)) / t_n)
}

/// Penalty `V(h) = ω̄ log(n_p) v(h)`.
pub fn penalty(
    h: &[f64],
    n_p: usize,
    omega_bar: f64,
    p: usize,
    delta: f64,
    t_n: f64,
) -> Result<f64> {
    if !(omega_bar > 0.0) {
        return Err(Error::invalid(format!("omega_bar must be positive, got {omega_bar}")));
    }
    Ok(omega_bar * (n_p as f64).ln() * variance_proxy(h, p, delta, t_n)?)
}

/// Which pointwise estimator the selection procedure compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlEstimator {
    /// The debiased estimator, as in the selection procedure's definition.
    Debiased,
    /// The plain pre-averaged estimator; more stable when the debiasing
    /// variance inflation is a concern.
    Plain,
}

/// Tuning knobs of the selection procedure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlConfig {
    /// Penalty constant; the theory only requires it "large". Default 4.
    pub omega_bar: f64,
    pub estimator: GlEstimator,
}

impl Default for GlConfig {
    fn default() -> Self {
        Self { omega_bar: 4.0, estimator: GlEstimator::Debiased }
    }
}

/// Per-candidate selection statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateStat {
    pub h: Vec<f64>,
    pub bias_proxy: f64,
    pub penalty: f64,
    pub criterion: f64,
}

/// Outcome of a selection run.
#[derive(Debug, Clone, PartialEq)]
pub struct GlSelection {
    pub selected_index: usize,
    pub stats: Vec<CandidateStat>,
    /// Pairwise convolved-kernel estimates, `pairwise[i][j] = μ̂_(h_i,h_j)(x)`.
    pub pairwise: Vec<Vec<f64>>,
    pub omega_bar: f64,
}

impl GlSelection {
    pub fn selected(&self) -> &[f64] {
        &self.stats[self.selected_index].h
    }

    /// Trace export: CSV `h_1..h_d,A,V,criterion,selected`.
    pub fn write_trace<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let d = self.stats[0].h.len();
        for j in 1..=d {
            write!(out, "h_{j},")?;
        }
        writeln!(out, "A,V,criterion,selected")?;
        for (i, s) in self.stats.iter().enumerate() {
            for v in &s.h {
                write!(out, "{v},")?;
            }
            writeln!(
                out,
                "{},{},{},{}",
                s.bias_proxy,
                s.penalty,
                s.criterion,
                u8::from(i == self.selected_index)
            )?;
        }
        Ok(())
    }
}

/// Run the selection at point `x`: compute all pairwise convolved-kernel
/// estimates, the bias proxies and penalties, and return the candidate
/// minimising their sum (lexicographically smallest on ties).
pub fn gl_select(
    sample: &PreaveragedSample,
    grid: &BandwidthGrid,
    base_kernel: &Kernel1D,
    weights: &DebiasWeights,
    x: &[f64],
    config: &GlConfig,
) -> Result<(Vec<f64>, GlSelection)> {
    let d = sample.dim();
    if d < 3 {
        return Err(Error::Unsupported(
            "adaptive selection needs d >= 3; use hyperparams::bandwidth_star".into(),
        ));
    }
    if grid.is_empty() {
        return Err(Error::invalid("empty bandwidth grid"));
    }
    if x.len() != d {
        return Err(Error::invalid("evaluation point has the wrong dimension"));
    }
    let m = grid.len();
    let p = sample.block_size();
    let delta = sample.scheme().delta;
    let t_n = sample.scheme().horizon();
    let n_p = sample.count();

    let mut penalties = Vec::with_capacity(m);
    for h in grid.candidates() {
        penalties.push(penalty(h, n_p, config.omega_bar, p, delta, t_n)?);
    }

    let mut plain = Vec::with_capacity(m);
    for h in grid.candidates() {
        let pk = ProductKernel::new(base_kernel.clone(), h.clone())?;
        plain.push(point_estimate(sample, &pk, weights, x, config.estimator)?);
    }

    // Convolved 1-D kernels are cached per unordered bandwidth pair; the
    // convolution commutes, so (h, η) and (η, h) share a table.
    let mut conv_cache: HashMap<(u64, u64), ConvolvedKernel1D> = HashMap::new();
    let mut pair_estimate = vec![vec![0.0f64; m]; m];
    for i in 0..m {
        for j in i..m {
            let hi = &grid.candidates()[i];
            let hj = &grid.candidates()[j];
            let mut coords = Vec::with_capacity(d);
            for c in 0..d {
                let key = pair_key(hi[c], hj[c]);
                if let Entry::Vacant(slot) = conv_cache.entry(key) {
                    slot.insert(ConvolvedKernel1D::new(base_kernel, hi[c], base_kernel, hj[c])?);
                }
                coords.push(conv_cache[&key].clone());
            }
            let kernel = ConvolvedProductKernel::new(coords)?;
            let value = point_estimate(sample, &kernel, weights, x, config.estimator)?;
            pair_estimate[i][j] = value;
            pair_estimate[j][i] = value;
        }
    }

    let mut stats = Vec::with_capacity(m);
    for i in 0..m {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..m {
            let diff = pair_estimate[i][j] - plain[j];
            worst = worst.max(diff * diff - penalties[j]);
        }
        let bias_proxy = worst.max(0.0);
        stats.push(CandidateStat {
            h: grid.candidates()[i].clone(),
            bias_proxy,
            penalty: penalties[i],
            criterion: bias_proxy + penalties[i],
        });
    }

    // candidates are in lexicographic order, so the first strict minimum
    // realises the smallest-h tie-break
    let mut selected_index = 0;
    for (i, s) in stats.iter().enumerate() {
        if s.criterion < stats[selected_index].criterion {
            selected_index = i;
        }
    }

    let selection = GlSelection {
        selected_index,
        stats,
        pairwise: pair_estimate,
        omega_bar: config.omega_bar,
    };
    Ok((selection.selected().to_vec(), selection))
}

fn pair_key(a: f64, b: f64) -> (u64, u64) {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    (lo.to_bits(), hi.to_bits())
}

fn point_estimate<K: CoordKernel>(
    sample: &PreaveragedSample,
    kernel: &K,
    weights: &DebiasWeights,
    x: &[f64],
    which: GlEstimator,
) -> Result<f64> {
    match which {
        GlEstimator::Debiased => mu_hat_value(sample, kernel, weights, x),
        GlEstimator::Plain => Ok(nu_hat_value(sample, kernel, x)),
    }
}
