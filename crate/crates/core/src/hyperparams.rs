//! Closed-form hyperparameter rules: regularity summaries, regime
//! classification, the high/low-frequency break-even point, optimal block
//! sizes and bandwidths, and predicted mean-squared-error rates.
//!
//! Conventions: natural logarithms throughout; bandwidths are clamped into
//! `(0, 1]`; the block size is clamped to `ceil(Δ^{-1/2})`, the validity
//! range of the bias bounds.

use crate::error::{Error, Result};

/// Anisotropic Hölder regularity: per-coordinate smoothness `α_i` and
/// constants `L_i`. The constructor sorts by smoothness (ascending) and
/// remembers the permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct HolderClass {
    alpha: Vec<f64>,
    lipschitz: Vec<f64>,
    permutation: Vec<usize>,
}

impl HolderClass {
    pub fn new(alpha: Vec<f64>, lipschitz: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() || alpha.len() != lipschitz.len() {
            return Err(Error::invalid("alpha and L must be non-empty and equally long"));
        }
        if alpha.iter().chain(lipschitz.iter()).any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("alpha and L entries must be positive"));
        }
        let mut order: Vec<usize> = (0..alpha.len()).collect();
        order.sort_by(|&a, &b| alpha[a].partial_cmp(&alpha[b]).unwrap());
        Ok(Self {
            alpha: order.iter().map(|&i| alpha[i]).collect(),
            lipschitz: order.iter().map(|&i| lipschitz[i]).collect(),
            permutation: order,
        })
    }

    /// Smoothness indices, sorted ascending.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    /// Original index of each sorted entry.
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Minimal kernel order `ceil(α_d)` required by the smoothest direction.
    pub fn kernel_order_requirement(&self) -> usize {
        self.alpha.last().unwrap().ceil() as usize
    }
}

/// Partition of smoothness configurations by the multiplicity `k_0` of the
/// minimal index (for `d ≥ 3`); dimensions 1 and 2 are handled separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothnessClass {
    LowDim,
    D1,
    D2,
    D3,
}

/// Regularity summary driving all rate formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeInfo {
    /// Number of coordinates attaining the minimal smoothness.
    pub k0: usize,
    pub class: SmoothnessClass,
    /// Harmonic mean of all smoothness indices.
    pub alpha_bar: f64,
    /// Harmonic mean of all but the two smallest (defined for d ≥ 3).
    pub alpha_bar3: Option<f64>,
    /// `2ᾱ / (2ᾱ + d)`.
    pub beta_bar: f64,
    /// `2ᾱ₃ / (2ᾱ₃ + d - 2)` (defined for d ≥ 3).
    pub beta_bar3: Option<f64>,
    alpha: Vec<f64>,
}

impl RegimeInfo {
    pub fn dimension(&self) -> usize {
        self.alpha.len()
    }

    /// Sorted smoothness indices.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha[0]
    }
}

/// Summarize a smoothness vector. Unsorted input is sorted, not rejected.
pub fn summarize(alpha: &[f64]) -> Result<RegimeInfo> {
    if alpha.is_empty() {
        return Err(Error::invalid("alpha must be non-empty"));
    }
    if alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::invalid("alpha entries must be positive"));
    }
    let mut a = alpha.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let d = a.len();
    let k0 = a.iter().filter(|&&v| v == a[0]).count();

    let alpha_bar = d as f64 / a.iter().map(|v| 1.0 / v).sum::<f64>();
    let alpha_bar3 = (d >= 3)
        .then(|| (d - 2) as f64 / a[2..].iter().map(|v| 1.0 / v).sum::<f64>());

    let class = if d <= 2 {
        SmoothnessClass::LowDim
    } else if k0 >= 3 {
        SmoothnessClass::D2
    } else if k0 == 1 && a[1] == a[2] {
        SmoothnessClass::D3
    } else {
        // k0 = 1 with α₂ < α₃, or k0 = 2 (which forces α₂ < α₃)
        SmoothnessClass::D1
    };

    Ok(RegimeInfo {
        k0,
        class,
        alpha_bar,
        alpha_bar3,
        beta_bar: 2.0 * alpha_bar / (2.0 * alpha_bar + d as f64),
        beta_bar3: alpha_bar3.map(|a3| 2.0 * a3 / (2.0 * a3 + (d - 2) as f64)),
        alpha: a,
    })
}

/// Options for the rules that have a documented convention choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperparamOptions {
    /// Proportionality constant in the `pΔ ≤ c·w` regime comparison.
    pub w_constant: f64,
    /// Exponent convention for the D2/D3 high-frequency bandwidth.
    pub hf_exponent: HfExponent,
}

/// The D2/D3 high-frequency bandwidth exponent `ᾱ₃ / (α_i · denom)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfExponent {
    /// `denom = 2ᾱ₃ + d - 2`, consistent with the variance rate.
    RateConsistent,
    /// `denom = ᾱ₃ + d - 2`, kept as a compatibility switch.
    Legacy,
}

impl Default for HyperparamOptions {
    fn default() -> Self {
        Self { w_constant: 1.0, hf_exponent: HfExponent::RateConsistent }
    }
}

/// Break-even sampling interval `w^HF`: effective steps `pΔ` below it behave
/// like continuous observation, above it like i.i.d. sampling.
pub fn breakeven_w_hf(n: usize, delta: f64, regime: &RegimeInfo) -> Result<f64> {
    let t = n as f64 * delta;
    if !(t > 1.0) {
        return Err(Error::invalid(format!("horizon T = nΔ = {t} must exceed 1")));
    }
    let d = regime.dimension() as f64;
    Ok(match regime.class {
        SmoothnessClass::LowDim => t.ln() / t,
        SmoothnessClass::D1 => {
            let a3 = regime.alpha_bar3.expect("d >= 3");
            let expo = a3 / (2.0 * a3 + d - 2.0)
                * (1.0 / regime.alpha[0] + 1.0 / regime.alpha[1]);
            t.ln() * (t.ln() / t).powf(expo)
        }
        SmoothnessClass::D2 | SmoothnessClass::D3 => {
            let a3 = regime.alpha_bar3.expect("d >= 3");
            let expo = a3 / (2.0 * a3 + d - 2.0)
                * (1.0 / regime.alpha[0] + 1.0 / regime.alpha[1]);
            t.powf(-expo)
        }
    })
}

/// High-frequency variance rate `v^HF` (mean-squared-error scale).
pub fn v_hf(regime: &RegimeInfo, n: usize, delta: f64) -> f64 {
    let t = n as f64 * delta;
    match regime.class {
        SmoothnessClass::LowDim => t.ln() / t,
        SmoothnessClass::D1 => (t.ln() / t).powf(regime.beta_bar3.expect("d >= 3")),
        SmoothnessClass::D2 | SmoothnessClass::D3 => t.powf(-regime.beta_bar3.expect("d >= 3")),
    }
}

/// Low-frequency variance rate `v^LF = n^{-2ᾱ/(2ᾱ+d)}`.
pub fn v_lf(regime: &RegimeInfo, n: usize) -> f64 {
    (n as f64).powf(-regime.beta_bar)
}

/// Optimal bandwidths for block size `p` (dispatches on `pΔ` against the
/// break-even point; all entries clamped into `(0, 1]`).
pub fn bandwidth_star(regime: &RegimeInfo, n: usize, delta: f64, p: usize) -> Result<Vec<f64>> {
    bandwidth_star_with(regime, n, delta, p, &HyperparamOptions::default())
}

pub fn bandwidth_star_with(
    regime: &RegimeInfo,
    n: usize,
    delta: f64,
    p: usize,
    options: &HyperparamOptions,
) -> Result<Vec<f64>> {
    if p == 0 {
        return Err(Error::invalid("p must be >= 1"));
    }
    let w = breakeven_w_hf(n, delta, regime)?;
    let t = n as f64 * delta;
    let d = regime.dimension() as f64;
    let high_frequency = p as f64 * delta <= options.w_constant * w;
    let h: Vec<f64> = if high_frequency {
        match regime.class {
            SmoothnessClass::LowDim => vec![t.powf(-0.5); regime.dimension()],
            SmoothnessClass::D1 => {
                let a3 = regime.alpha_bar3.expect("d >= 3");
                regime
                    .alpha
                    .iter()
                    .map(|&ai| (t.ln() / t).powf(a3 / (ai * (2.0 * a3 + d - 2.0))))
                    .collect()
            }
            SmoothnessClass::D2 | SmoothnessClass::D3 => {
                let a3 = regime.alpha_bar3.expect("d >= 3");
                let denom_base = match options.hf_exponent {
                    HfExponent::RateConsistent => 2.0 * a3 + d - 2.0,
                    HfExponent::Legacy => a3 + d - 2.0,
                };
                regime.alpha.iter().map(|&ai| t.powf(-a3 / (ai * denom_base))).collect()
            }
        }
    } else {
        let ab = regime.alpha_bar;
        regime
            .alpha
            .iter()
            .map(|&ai| (p as f64 / n as f64).powf(ab / (ai * (2.0 * ab + d))))
            .collect()
    };
    Ok(h.into_iter().map(|v| v.min(1.0)).collect())
}

/// Block-size selection policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PMode {
    /// `⌈(τ^{2α₁} Δ^{-1})^{1/(1+α₁)}⌉ ∨ 1` — balances the debiased risk.
    Debias,
    /// `⌊(τ² Δ^{-1})^{1/2}⌋ ∨ 1` — the plain-estimator rule.
    Numeric,
}

/// Optimal block size, clamped to `⌈Δ^{-1/2}⌉`.
pub fn choose_p(tau: f64, delta: f64, alpha1: f64, mode: PMode) -> Result<usize> {
    if !(delta > 0.0) || !(tau >= 0.0) || !(alpha1 > 0.0) {
        return Err(Error::invalid("need delta > 0, tau >= 0, alpha1 > 0"));
    }
    let raw = match mode {
        PMode::Debias => (tau.powf(2.0 * alpha1) / delta).powf(1.0 / (1.0 + alpha1)).ceil(),
        PMode::Numeric => (tau * tau / delta).sqrt().floor(),
    };
    let cap = delta.powf(-0.5).ceil();
    Ok(raw.max(1.0).min(cap) as usize)
}

/// Sampling-frequency regime of a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frequency {
    HighFrequency,
    LowFrequency,
}

impl std::fmt::Display for Frequency {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Frequency::HighFrequency => write!(f, "HF"),
            Frequency::LowFrequency => write!(f, "LF"),
        }
    }
}

/// Predicted mean-squared-error bound for the four noise/frequency regimes.
///
/// At `τ = 0` the noise term vanishes identically and the corresponding
/// variance rate is returned instead of a literal zero (the minimum form is
/// an upper bound, not an attainable value).
pub fn predicted_rate(
    regime: &RegimeInfo,
    tau: f64,
    delta: f64,
    n: usize,
    p_star: usize,
) -> Result<f64> {
    predicted_rate_with(regime, tau, delta, n, p_star, &HyperparamOptions::default())
}

pub fn predicted_rate_with(
    regime: &RegimeInfo,
    tau: f64,
    delta: f64,
    n: usize,
    p_star: usize,
    options: &HyperparamOptions,
) -> Result<f64> {
    if !(tau >= 0.0) || !(delta > 0.0) || p_star == 0 {
        return Err(Error::invalid("need tau >= 0, delta > 0, p_star >= 1"));
    }
    let a1 = regime.alpha1();
    let w = breakeven_w_hf(n, delta, regime)?;
    let high_frequency = p_star as f64 * delta <= options.w_constant * w;
    let small_noise = tau.powf(2.0 * a1) <= delta;
    let noise_bias = tau.powf(2.0 * a1);
    let noisy_rate = (tau * tau * delta).powf(a1 / (1.0 + a1));
    Ok(match (small_noise, high_frequency) {
        (true, true) => {
            let v = v_hf(regime, n, delta);
            if tau == 0.0 {
                v
            } else {
                v.min(noise_bias)
            }
        }
        (false, true) => v_hf(regime, n, delta).min(noisy_rate),
        (true, false) => {
            let v = v_lf(regime, n);
            if tau == 0.0 {
                v
            } else {
                v.min(noise_bias)
            }
        }
        (false, false) => noisy_rate,
    })
}

/// A fully resolved hyperparameter choice.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperparamPlan {
    pub p_star: usize,
    pub h_star: Vec<f64>,
    pub regime: Frequency,
    pub predicted_rate: f64,
    pub w_hf: f64,
}

impl HyperparamPlan {
    /// Flat key-value export for harness logs.
    pub fn export(&self) -> String {
        let h: Vec<String> = self.h_star.iter().map(|v| v.to_string()).collect();
        format!(
            "p_star={}\nh_star=[{}]\nregime={}\npredicted_rate={}\nw_hf={}\n",
            self.p_star,
            h.join(","),
            self.regime,
            self.predicted_rate,
            self.w_hf
        )
    }
}

/// Assemble the full plan: block size, bandwidths, regime, predicted rate.
/// The regime flag and the bandwidth dispatch share one predicate.
pub fn plan(
    regime: &RegimeInfo,
    n: usize,
    delta: f64,
    tau: f64,
    mode: PMode,
    options: &HyperparamOptions,
) -> Result<HyperparamPlan> {
    let p_star = choose_p(tau, delta, regime.alpha1(), mode)?;
    let w = breakeven_w_hf(n, delta, regime)?;
    let frequency = if p_star as f64 * delta <= options.w_constant * w {
        Frequency::HighFrequency
    } else {
        Frequency::LowFrequency
    };
    let h_star = bandwidth_star_with(regime, n, delta, p_star, options)?;
    let rate = predicted_rate_with(regime, tau, delta, n, p_star, options)?;
    Ok(HyperparamPlan { p_star, h_star, regime: frequency, predicted_rate: rate, w_hf: w })
}
