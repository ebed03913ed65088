//! Compactly supported kernels of prescribed order.
//!
//! The default family lives on `[-1, 1]` and is built from Legendre
//! polynomials: for an order-`l` kernel,
//!
//! ```text
//! K(y) = Σ_{m even, m ≤ l-1} P_m(0) (2m+1)/2 · P_m(y),   |y| ≤ 1,
//! ```
//!
//! which integrates to one and has vanishing moments of orders `1..l-1`.
//! A truncated Gaussian is available for diagnostics; it is order 2 and only
//! approximately compact, so it is not used by the selection machinery.

use crate::error::{Error, Result};
use crate::quad::{integrate_gl64_panels, KahanSum};

/// Kernel families supported by [`Kernel1D`].
#[derive(Debug, Clone, PartialEq)]
enum Shape {
    /// Even-degree Legendre expansion; `coeffs[m]` multiplies `P_m`.
    Legendre { coeffs: Vec<f64> },
    /// Standard normal density truncated at the support radius. Diagnostics
    /// only: violates the compact-support assumption of the theory.
    Gaussian,
}

/// One-dimensional kernel with compact support and known order.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel1D {
    order: usize,
    support_radius: f64,
    shape: Shape,
    sup_norm: f64,
}

impl Kernel1D {
    /// Kernel order `l`: moments of orders `1..l-1` vanish.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Half-width of the support; the kernel vanishes for `|y|` beyond it.
    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Cached supremum norm.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Whether the kernel is exactly compactly supported.
    pub fn strictly_compact(&self) -> bool {
        matches!(self.shape, Shape::Legendre { .. })
    }

    /// Evaluate the kernel at `y`.
    pub fn eval(&self, y: f64) -> f64 {
        if y.abs() > self.support_radius {
            return 0.0;
        }
        match &self.shape {
            Shape::Legendre { coeffs } => eval_legendre_series(coeffs, y),
            Shape::Gaussian => {
                (-0.5 * y * y).exp() / (2.0 * std::f64::consts::PI).sqrt()
            }
        }
    }
}

/// Evaluate `Σ coeffs[m] P_m(y)` with the three-term recurrence.
fn eval_legendre_series(coeffs: &[f64], y: f64) -> f64 {
    let mut acc = 0.0;
    let mut p0 = 1.0;
    let mut p1 = y;
    for (m, &c) in coeffs.iter().enumerate() {
        let pm = match m {
            0 => 1.0,
            1 => y,
            _ => {
                let mf = m as f64;
                let p2 = ((2.0 * mf - 1.0) * y * p1 - (mf - 1.0) * p0) / mf;
                p0 = p1;
                p1 = p2;
                p2
            }
        };
        if c != 0.0 {
            acc += c * pm;
        }
    }
    acc
}

/// `P_m(0)` for the Legendre polynomials (zero for odd `m`).
fn legendre_at_zero(m: usize) -> f64 {
    if m % 2 == 1 {
        return 0.0;
    }
    let mut v = 1.0;
    let mut k = 2;
    while k <= m {
        v *= -((k - 1) as f64) / k as f64;
        k += 2;
    }
    v
}

/// Build the order-`l` Legendre kernel on `[-1, 1]`.
pub fn make_order_kernel(l: usize) -> Result<Kernel1D> {
    if l < 1 {
        return Err(Error::invalid(format!("kernel order must be >= 1, got {l}")));
    }
    let m_max = if l >= 2 { l - 1 } else { 0 };
    let mut coeffs = vec![0.0; m_max + 1];
    let mut m = 0;
    while m <= m_max {
        coeffs[m] = legendre_at_zero(m) * (2 * m + 1) as f64 / 2.0;
        m += 2;
    }
    let mut kernel = Kernel1D {
        order: l,
        support_radius: 1.0,
        shape: Shape::Legendre { coeffs },
        sup_norm: 0.0,
    };
    kernel.sup_norm = scan_sup_norm(&kernel);
    Ok(kernel)
}

/// Truncated standard Gaussian, order 2. The truncation point leaves tail
/// mass below 1e-16, so the unit-integral property holds to quadrature
/// accuracy, but the support is not exactly compact.
pub fn gaussian_kernel() -> Kernel1D {
    let mut kernel = Kernel1D {
        order: 2,
        support_radius: 8.5,
        shape: Shape::Gaussian,
        sup_norm: 0.0,
    };
    kernel.sup_norm = scan_sup_norm(&kernel);
    kernel
}

fn scan_sup_norm(kernel: &Kernel1D) -> f64 {
    let r = kernel.support_radius;
    let n = 20_001;
    let mut best: f64 = 0.0;
    for i in 0..n {
        let y = -r + 2.0 * r * i as f64 / (n - 1) as f64;
        best = best.max(kernel.eval(y).abs());
    }
    best
}

/// A multivariate kernel that factorises over coordinates. Both the plain
/// product kernel and the convolved kernel used by the adaptive procedure
/// implement this, which lets the estimators share one evaluation path.
pub trait CoordKernel {
    fn dims(&self) -> usize;

    /// The one-dimensional factor of coordinate `i`, bandwidth folded in.
    fn eval_coord(&self, i: usize, t: f64) -> f64;

    /// Support half-width of factor `i` in data units.
    fn coord_support(&self, i: usize) -> f64;

    /// Full evaluation `∏_i k_i(y_i)`.
    fn eval(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.dims());
        let mut prod = 1.0;
        for (i, &t) in y.iter().enumerate() {
            prod *= self.eval_coord(i, t);
            if prod == 0.0 {
                return 0.0;
            }
        }
        prod
    }
}

/// Anisotropic product kernel `K_h(y) = ∏ h_i^{-1} K(y_i / h_i)`.
#[derive(Debug, Clone)]
pub struct ProductKernel {
    base: Kernel1D,
    bandwidths: Vec<f64>,
}

impl ProductKernel {
    pub fn new(base: Kernel1D, bandwidths: Vec<f64>) -> Result<Self> {
        if bandwidths.is_empty() {
            return Err(Error::invalid("bandwidth vector must be non-empty"));
        }
        if bandwidths.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::invalid(format!(
                "bandwidths must be positive and finite, got {bandwidths:?}"
            )));
        }
        Ok(Self { base, bandwidths })
    }

    pub fn base(&self) -> &Kernel1D {
        &self.base
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }
}

impl CoordKernel for ProductKernel {
    fn dims(&self) -> usize {
        self.bandwidths.len()
    }

    fn eval_coord(&self, i: usize, t: f64) -> f64 {
        let h = self.bandwidths[i];
        self.base.eval(t / h) / h
    }

    fn coord_support(&self, i: usize) -> f64 {
        self.bandwidths[i] * self.base.support_radius
    }
}

/// Evaluate a product kernel at a point (free-function form of
/// [`CoordKernel::eval`]).
pub fn eval_product(pk: &ProductKernel, y: &[f64]) -> f64 {
    pk.eval(y)
}

/// Number of sample points in a convolution table.
const CONV_TABLE_SIZE: usize = 1025;
/// Quadrature panels per convolution integral; 8 × 64 = 512 nodes.
const CONV_QUAD_PANELS: usize = 8;

/// Tabulated one-dimensional convolution `(K_h * K_η)(z)` with cubic
/// interpolation between samples.
#[derive(Debug, Clone)]
pub struct ConvolvedKernel1D {
    left: (Kernel1D, f64),
    right: (Kernel1D, f64),
    support: f64,
    step: f64,
    values: Vec<f64>,
    normalization_residual: f64,
}

impl ConvolvedKernel1D {
    /// Build the table for `(K_h * K_η)` by Gauss–Legendre quadrature.
    ///
    /// Fails with a numerical error if the quadrature-evaluated integral of
    /// the convolution deviates from one by more than 1e-6.
    pub fn new(a: &Kernel1D, h: f64, b: &Kernel1D, eta: f64) -> Result<Self> {
        if !(h > 0.0) || !(eta > 0.0) {
            return Err(Error::invalid(format!(
                "convolution bandwidths must be positive, got h={h}, eta={eta}"
            )));
        }
        let support = a.support_radius * h + b.support_radius * eta;
        let step = 2.0 * support / (CONV_TABLE_SIZE - 1) as f64;
        let mut values = Vec::with_capacity(CONV_TABLE_SIZE);
        for j in 0..CONV_TABLE_SIZE {
            let z = -support + j as f64 * step;
            values.push(convolution_at(a, h, b, eta, z));
        }

        // Exact-function normalization check: between the support breakpoints
        // the convolution is polynomial in z, so panelled Gauss-Legendre
        // integration of the directly quadratured values is exact.
        let inner = (a.support_radius * h - b.support_radius * eta).abs();
        let mut cuts = vec![-support, -inner, inner, support];
        cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
        let mut total = KahanSum::new();
        for w in cuts.windows(2) {
            if w[1] > w[0] {
                total.add(integrate_gl64_panels(
                    |z| convolution_at(a, h, b, eta, z),
                    w[0],
                    w[1],
                    4,
                ));
            }
        }
        let normalization_residual = (total.value() - 1.0).abs();
        if normalization_residual > 1e-6 {
            return Err(Error::Numerical(format!(
                "convolution normalization residual {normalization_residual:.3e} exceeds 1e-6"
            )));
        }

        Ok(Self {
            left: (a.clone(), h),
            right: (b.clone(), eta),
            support,
            step,
            values,
            normalization_residual,
        })
    }

    pub fn support_radius(&self) -> f64 {
        self.support
    }

    pub fn normalization_residual(&self) -> f64 {
        self.normalization_residual
    }

    /// Interpolated evaluation: Catmull–Rom cubic on the uniform table,
    /// degrading to linear on the two outermost cells (the convolution meets
    /// its support edge in a kink that a cubic stencil would overshoot).
    pub fn eval(&self, z: f64) -> f64 {
        if z.abs() >= self.support {
            return 0.0;
        }
        let u = (z + self.support) / self.step;
        let j = (u.floor() as usize).min(CONV_TABLE_SIZE - 2);
        let t = u - j as f64;
        if j == 0 || j >= CONV_TABLE_SIZE - 2 {
            return self.values[j] * (1.0 - t) + self.values[j + 1] * t;
        }
        let v0 = self.values[j - 1];
        let v1 = self.values[j];
        let v2 = self.values[j + 1];
        let v3 = self.values[j + 2];
        0.5 * (2.0 * v1
            + (-v0 + v2) * t
            + (2.0 * v0 - 5.0 * v1 + 4.0 * v2 - v3) * t * t
            + (-v0 + 3.0 * v1 - 3.0 * v2 + v3) * t * t * t)
    }

    /// Direct quadrature evaluation, bypassing the table. Slow; used by
    /// accuracy checks.
    pub fn eval_exact(&self, z: f64) -> f64 {
        convolution_at(&self.left.0, self.left.1, &self.right.0, self.right.1, z)
    }
}

/// `(K_h * K_η)(z) = ∫ K_h(z-u) K_η(u) du` on the clipped overlap interval.
fn convolution_at(a: &Kernel1D, h: f64, b: &Kernel1D, eta: f64, z: f64) -> f64 {
    let lo = (z - a.support_radius * h).max(-b.support_radius * eta);
    let hi = (z + a.support_radius * h).min(b.support_radius * eta);
    if hi <= lo {
        return 0.0;
    }
    integrate_gl64_panels(
        |u| a.eval((z - u) / h) / h * b.eval(u / eta) / eta,
        lo,
        hi,
        CONV_QUAD_PANELS,
    )
}

/// Convolve two bandwidth-scaled kernels.
pub fn convolve(a: &Kernel1D, h: f64, b: &Kernel1D, eta: f64) -> Result<ConvolvedKernel1D> {
    ConvolvedKernel1D::new(a, h, b, eta)
}

/// Product of per-coordinate convolved kernels, `∏_i (K_{h_i} * K_{η_i})`.
#[derive(Debug, Clone)]
pub struct ConvolvedProductKernel {
    coords: Vec<ConvolvedKernel1D>,
}

impl ConvolvedProductKernel {
    pub fn new(coords: Vec<ConvolvedKernel1D>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("convolved product kernel needs >= 1 coordinate"));
        }
        Ok(Self { coords })
    }

    /// Convolve `base` at bandwidths `h` against `base` at bandwidths `eta`,
    /// coordinate by coordinate.
    pub fn from_bandwidths(base: &Kernel1D, h: &[f64], eta: &[f64]) -> Result<Self> {
        if h.len() != eta.len() {
            return Err(Error::invalid("bandwidth vectors must have equal length"));
        }
        let coords = h
            .iter()
            .zip(eta.iter())
            .map(|(&hi, &ei)| ConvolvedKernel1D::new(base, hi, base, ei))
            .collect::<Result<Vec<_>>>()?;
        Self::new(coords)
    }
}

impl CoordKernel for ConvolvedProductKernel {
    fn dims(&self) -> usize {
        self.coords.len()
    }

    fn eval_coord(&self, i: usize, t: f64) -> f64 {
        self.coords[i].eval(t)
    }

    fn coord_support(&self, i: usize) -> f64 {
        self.coords[i].support_radius()
    }
}
