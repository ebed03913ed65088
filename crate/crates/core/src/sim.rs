//! Simulation of stationary diffusions with unit diffusion coefficient and
//! generation of noisy discrete observations.
//!
//! The observation model: the latent path solves `dX_t = b(X_t) dt + dW_t`
//! started from (an approximation of) its stationary law, is sampled at times
//! `iΔ` for `i = 0..n`, and is observed as `Y_i = X_{iΔ} + τ ξ_i` with
//! independent standard Gaussian `ξ_i`. For gradient drifts `b = -∇V` the
//! stationary density is `Z_V^{-1} e^{-2V}`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, KahanSum};
use crate::rng::{derive_seed, stream_rng, NOISE_STREAM, PATH_STREAM};

type VecField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// One-step exact transition sampler: maps `(state, dt, standard normals)`
/// to the next state. The slice of normals has the model dimension.
type ExactStep = Arc<dyn Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync>;

/// Structural constants of the drift, when known: `|b(0)| ≤ b0`,
/// `|∂_i b| ≤ b1/d`, `V ≥ v0`. Metadata only; nothing is enforced.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ModelBounds {
    pub b0: Option<f64>,
    pub b1: Option<f64>,
    pub v0: Option<f64>,
}

/// Diffusion with drift `b = -∇V` and unit diffusion coefficient.
pub struct DiffusionModel {
    dimension: usize,
    drift: VecField,
    potential: ScalarField,
    analytic_density: Option<ScalarField>,
    exact_step: Option<ExactStep>,
    minimizer: Vec<f64>,
    bounds: ModelBounds,
    gradient_check_error: f64,
    density_mass_error: Option<f64>,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("dimension", &self.dimension)
            .field("has_analytic_density", &self.analytic_density.is_some())
            .field("has_exact_sampler", &self.exact_step.is_some())
            .field("gradient_check_error", &self.gradient_check_error)
            .finish()
    }
}

impl DiffusionModel {
    /// Build a model from a drift and its potential.
    ///
    /// The constructor runs an advisory finite-difference check that the
    /// drift matches `-∇V` at randomly sampled points; a violation logs a
    /// warning rather than failing, since the structural assumptions of the
    /// theory are asymptotic and not verifiable pointwise.
    pub fn new(
        dimension: usize,
        drift: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        potential: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        let mut model = Self {
            dimension,
            drift: Arc::new(drift),
            potential: Arc::new(potential),
            analytic_density: None,
            exact_step: None,
            minimizer: vec![0.0; dimension],
            bounds: ModelBounds::default(),
            gradient_check_error: 0.0,
            density_mass_error: None,
        };
        model.gradient_check_error = model.run_gradient_check();
        if model.gradient_check_error > 1e-5 {
            log::warn!(
                "drift does not look like -grad V (worst relative error {:.3e}); \
                 stationary-density formulas may not apply",
                model.gradient_check_error
            );
        }
        Ok(model)
    }

    /// Attach the analytic invariant density (ground truth for benchmarks).
    /// Checks that it integrates to one over a covering grid.
    pub fn with_analytic_density(
        mut self,
        density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.analytic_density = Some(Arc::new(density));
        if self.dimension <= 3 {
            let mass = self.density_mass();
            let err = (mass - 1.0).abs();
            self.density_mass_error = Some(err);
            if err > 1e-3 {
                log::warn!("analytic density integrates to {mass:.6}, not 1");
            }
        }
        self
    }

    /// Attach a closed-form transition sampler.
    pub fn with_exact_step(
        mut self,
        step: impl Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.exact_step = Some(Arc::new(step));
        self
    }

    /// Declare the potential's minimizer, the default start of burn-in.
    pub fn with_minimizer(mut self, x: Vec<f64>) -> Self {
        assert_eq!(x.len(), self.dimension);
        self.minimizer = x;
        self
    }

    /// Record the structural constants of the drift.
    pub fn with_bounds(mut self, bounds: ModelBounds) -> Self {
        self.bounds = bounds;
        self
    }

    /// Ornstein–Uhlenbeck model `b(x) = -θx`, `V(x) = θ|x|²/2`, in `d`
    /// independent coordinates. Carries the exact transition sampler and the
    /// analytic stationary density `N(0, I/(2θ))` per coordinate.
    pub fn ou(theta: f64, dimension: usize) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(Error::invalid(format!("theta must be positive, got {theta}")));
        }
        let var = 1.0 / (2.0 * theta);
        let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt().powi(dimension as i32);
        let model = Self::new(
            dimension,
            move |x, out| {
                for (o, &xi) in out.iter_mut().zip(x.iter()) {
                    *o = -theta * xi;
                }
            },
            move |x| 0.5 * theta * x.iter().map(|v| v * v).sum::<f64>(),
        )?;
        Ok(model
            .with_analytic_density(move |x| {
                norm * (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * var)).exp()
            })
            .with_exact_step(move |x, dt, normals, out| {
                let decay = (-theta * dt).exp();
                let sd = ((1.0 - (-2.0 * theta * dt).exp()) / (2.0 * theta)).sqrt();
                for i in 0..x.len() {
                    out[i] = decay * x[i] + sd * normals[i];
                }
            })
            .with_bounds(ModelBounds {
                b0: Some(0.0),
                b1: Some(theta * dimension as f64),
                v0: Some(0.0),
            }))
    }

    /// One-dimensional double-well model `V(x) = (x² - a²)² / (4 s)`.
    /// The normalizing constant is computed by adaptive quadrature.
    pub fn double_well(a: f64, scale: f64) -> Result<Self> {
        if !(a > 0.0) || !(scale > 0.0) {
            return Err(Error::invalid("double-well parameters must be positive"));
        }
        let pot = move |x: f64| (x * x - a * a).powi(2) / (4.0 * scale);
        let z = adaptive_simpson(|x| (-2.0 * pot(x)).exp(), -12.0, 12.0, 1e-12);
        let model = Self::new(
            1,
            move |x, out| out[0] = -x[0] * (x[0] * x[0] - a * a) / scale,
            move |x| pot(x[0]),
        )?;
        Ok(model
            .with_analytic_density(move |x| (-2.0 * pot(x[0])).exp() / z)
            .with_minimizer(vec![a]))
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out);
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        (self.potential)(x)
    }

    pub fn has_analytic_density(&self) -> bool {
        self.analytic_density.is_some()
    }

    /// Evaluate the analytic invariant density, if present.
    pub fn analytic_density(&self, x: &[f64]) -> Option<f64> {
        self.analytic_density.as_ref().map(|f| f(x))
    }

    pub fn has_exact_sampler(&self) -> bool {
        self.exact_step.is_some()
    }

    /// Apply the closed-form transition over `dt` using the supplied
    /// standard normal draws. Returns false when the model has no exact
    /// sampler (the state is then left untouched).
    pub fn exact_transition(&self, x: &[f64], dt: f64, normals: &[f64], out: &mut [f64]) -> bool {
        match &self.exact_step {
            Some(step) => {
                step(x, dt, normals, out);
                true
            }
            None => false,
        }
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }

    pub fn bounds(&self) -> &ModelBounds {
        &self.bounds
    }

    /// Worst relative mismatch between `-∇V` (finite differences) and the
    /// drift, over the sampled check points.
    pub fn gradient_check_error(&self) -> f64 {
        self.gradient_check_error
    }

    /// `|∫ analytic_density - 1|`, when the check ran.
    pub fn density_mass_error(&self) -> Option<f64> {
        self.density_mass_error
    }

    fn run_gradient_check(&self) -> f64 {
        let mut rng = stream_rng(0xD1FF_C4EC, 0);
        let d = self.dimension;
        let mut worst: f64 = 0.0;
        let mut x = vec![0.0; d];
        let mut b = vec![0.0; d];
        let eps = 1e-5;
        for _ in 0..16 {
            for (xi, c) in x.iter_mut().zip(self.minimizer.iter()) {
                *xi = c + rng.sample::<f64, _>(StandardNormal);
            }
            (self.drift)(&x, &mut b);
            for i in 0..d {
                let saved = x[i];
                x[i] = saved + eps;
                let vp = (self.potential)(&x);
                x[i] = saved - eps;
                let vm = (self.potential)(&x);
                x[i] = saved;
                let grad = (vp - vm) / (2.0 * eps);
                let denom = b[i].abs().max(1.0);
                worst = worst.max((grad + b[i]).abs() / denom);
            }
        }
        worst
    }

    /// Tensor Simpson mass of the analytic density over `[-12, 12]^d`.
    fn density_mass(&self) -> f64 {
        let f = self.analytic_density.as_ref().expect("density present");
        let d = self.dimension;
        let pts_per_dim = if d == 3 { 65 } else { 129 };
        let lo = -12.0;
        let hi = 12.0;
        let step = (hi - lo) / (pts_per_dim - 1) as f64;
        let weight = |i: usize| -> f64 {
            if i == 0 || i == pts_per_dim - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        };
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        let mut acc = KahanSum::new();
        loop {
            let mut w = 1.0;
            for k in 0..d {
                w *= weight(idx[k]);
                x[k] = lo + idx[k] as f64 * step;
            }
            acc.add(w * f(&x));
            // odometer over the grid
            let mut k = 0;
            loop {
                if k == d {
                    return acc.value() * (step / 3.0).powi(d as i32);
                }
                idx[k] += 1;
                if idx[k] < pts_per_dim {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

/// Sampling design: `n` observation intervals of length `Δ`, noise level `τ`,
/// and the master seed of the series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationScheme {
    pub n: usize,
    pub delta: f64,
    pub tau: f64,
    pub seed: u64,
}

impl ObservationScheme {
    pub fn new(n: usize, delta: f64, tau: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n must be >= 1"));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::invalid(format!("delta must be positive, got {delta}")));
        }
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::invalid(format!("tau must be nonnegative, got {tau}")));
        }
        Ok(Self { n, delta, tau, seed })
    }

    /// Time horizon `T = nΔ`.
    pub fn horizon(&self) -> f64 {
        self.n as f64 * self.delta
    }
}

/// Initial state of a simulated path.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Start from the stationary law (exact where available, otherwise via
    /// burn-in from the potential's minimizer).
    Stationary,
    /// Start from a fixed point.
    Fixed(Vec<f64>),
}

/// A simulated series: latent states `X` and observations `Y` at times `iΔ`
/// for `i = 0..=n`, stored row-major with stride `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    pub scheme: ObservationScheme,
    dim: usize,
    latent: Vec<f64>,
    observed: Vec<f64>,
}

impl ObservationSeries {
    /// Assemble a series from raw buffers (row-major, stride `dim`), e.g. for
    /// estimating on externally collected data. `latent` may equal `observed`
    /// when no ground truth is available.
    pub fn from_parts(
        scheme: ObservationScheme,
        dim: usize,
        latent: Vec<f64>,
        observed: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        let expect = (scheme.n + 1) * dim;
        if latent.len() != expect || observed.len() != expect {
            return Err(Error::invalid(format!(
                "series buffers must hold (n+1)*dim = {expect} values, got {} and {}",
                latent.len(),
                observed.len()
            )));
        }
        Ok(Self { scheme, dim, latent, observed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored time points, `n + 1`.
    pub fn len(&self) -> usize {
        self.latent.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.latent.is_empty()
    }

    pub fn latent_point(&self, i: usize) -> &[f64] {
        &self.latent[i * self.dim..(i + 1) * self.dim]
    }

    pub fn observed_point(&self, i: usize) -> &[f64] {
        &self.observed[i * self.dim..(i + 1) * self.dim]
    }

    pub fn latent(&self) -> &[f64] {
        &self.latent
    }

    pub fn observed(&self) -> &[f64] {
        &self.observed
    }

    /// True when no noise has been added yet (`Y = X`).
    pub fn is_latent_only(&self) -> bool {
        self.latent == self.observed
    }

    /// CSV export: header `t,x_1..x_d,y_1..y_d`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        write!(out, "t")?;
        for j in 1..=self.dim {
            write!(out, ",x_{j}")?;
        }
        for j in 1..=self.dim {
            write!(out, ",y_{j}")?;
        }
        writeln!(out)?;
        for i in 0..self.len() {
            write!(out, "{:.16e}", i as f64 * self.scheme.delta)?;
            for v in self.latent_point(i) {
                write!(out, ",{v:.16e}")?;
            }
            for v in self.observed_point(i) {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// One exact Ornstein–Uhlenbeck transition step (componentwise):
/// `x' = e^{-θΔ} x + sqrt((1 - e^{-2θΔ})/(2θ)) ζ`. Degenerates to the
/// identity at `Δ = 0`.
pub fn ou_step(theta: f64, x: f64, delta: f64, z: f64) -> f64 {
    let decay = (-theta * delta).exp();
    let sd = ((1.0 - (-2.0 * theta * delta).exp()) / (2.0 * theta)).sqrt();
    decay * x + sd * z
}

/// Simulate a `d`-dimensional Ornstein–Uhlenbeck path with the exact
/// transition kernel. Returns a latent-only series (`Y = X`).
pub fn simulate_ou_exact(
    theta: f64,
    dimension: usize,
    scheme: &ObservationScheme,
    init: InitialState,
) -> Result<ObservationSeries> {
    if !(theta > 0.0) {
        return Err(Error::invalid(format!("theta must be positive, got {theta}")));
    }
    if dimension == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    let mut rng = stream_rng(scheme.seed, PATH_STREAM);
    let d = dimension;
    let n = scheme.n;
    let mut latent = Vec::with_capacity((n + 1) * d);

    let stationary_sd = (1.0 / (2.0 * theta)).sqrt();
    match init {
        InitialState::Stationary => {
            for _ in 0..d {
                latent.push(stationary_sd * rng.sample::<f64, _>(StandardNormal));
            }
        }
        InitialState::Fixed(x0) => {
            if x0.len() != d {
                return Err(Error::invalid(format!(
                    "initial point has dimension {}, expected {d}",
                    x0.len()
                )));
            }
            latent.extend_from_slice(&x0);
        }
    }

    let decay = (-theta * scheme.delta).exp();
    let sd = ((1.0 - (-2.0 * theta * scheme.delta).exp()) / (2.0 * theta)).sqrt();
    for i in 1..=n {
        for j in 0..d {
            let prev = latent[(i - 1) * d + j];
            let z: f64 = rng.sample(StandardNormal);
            latent.push(decay * prev + sd * z);
        }
    }

    let observed = latent.clone();
    Ok(ObservationSeries { scheme: *scheme, dim: d, latent, observed })
}

/// Euler–Maruyama simulation with `substeps` internal steps per observation
/// interval; the state is accumulated with Kahan compensation per coordinate.
/// Returns a latent-only series.
pub fn simulate_euler(
    model: &DiffusionModel,
    scheme: &ObservationScheme,
    substeps: usize,
    init: InitialState,
) -> Result<ObservationSeries> {
    if substeps == 0 {
        return Err(Error::invalid("substeps must be >= 1"));
    }
    let d = model.dimension();
    let n = scheme.n;
    let dt = scheme.delta / substeps as f64;
    let sqrt_dt = dt.sqrt();
    let mut rng = stream_rng(scheme.seed, PATH_STREAM);

    let mut state: Vec<KahanSum> = vec![KahanSum::new(); d];
    let mut burn_steps = 0usize;
    match init {
        InitialState::Fixed(x0) => {
            if x0.len() != d {
                return Err(Error::invalid(format!(
                    "initial point has dimension {}, expected {d}",
                    x0.len()
                )));
            }
            for (s, &v) in state.iter_mut().zip(x0.iter()) {
                s.add(v);
            }
        }
        InitialState::Stationary => {
            // No sampling recipe exists for general drifts; burn in from the
            // potential's minimizer for max(10, 0.1 T) time units.
            for (s, &v) in state.iter_mut().zip(model.minimizer().iter()) {
                s.add(v);
            }
            let burn_time = 10.0f64.max(0.1 * scheme.horizon());
            burn_steps = (burn_time / dt).ceil() as usize;
        }
    }

    let mut latent = Vec::with_capacity((n + 1) * d);
    let mut x = vec![0.0; d];
    let mut b = vec![0.0; d];
    let total_micro = burn_steps + n * substeps;
    let mut recorded = 0usize;

    for micro in 0..=total_micro {
        if micro >= burn_steps && (micro - burn_steps) % substeps == 0 {
            latent.extend(state.iter().map(|s| s.value()));
            recorded += 1;
            if recorded == n + 1 {
                break;
            }
        }
        for (xi, s) in x.iter_mut().zip(state.iter()) {
            *xi = s.value();
        }
        model.drift(&x, &mut b);
        if b.iter().any(|v| !v.is_finite()) {
            let time_index = micro.saturating_sub(burn_steps) / substeps;
            return Err(Error::Simulation {
                time_index,
                message: "drift returned a non-finite value".into(),
            });
        }
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            state[j].add(b[j] * dt + sqrt_dt * z);
        }
    }
    debug_assert_eq!(recorded, n + 1);

    let observed = latent.clone();
    Ok(ObservationSeries { scheme: *scheme, dim: d, latent, observed })
}

/// Add i.i.d. Gaussian observation noise: `Y_i = X_i + τ ξ_i`.
///
/// The input must be latent-only. The noise stream is derived from `seed`
/// and is independent of the path stream.
pub fn add_noise(series: &ObservationSeries, tau: f64, seed: u64) -> Result<ObservationSeries> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("tau must be nonnegative, got {tau}")));
    }
    if !series.is_latent_only() {
        return Err(Error::invalid("series already carries observation noise"));
    }
    let mut out = series.clone();
    out.scheme.tau = tau;
    if tau == 0.0 {
        return Ok(out);
    }
    let mut rng = stream_rng(seed, NOISE_STREAM);
    for v in out.observed.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += tau * z;
    }
    Ok(out)
}

/// Scheme for replication `r` of an experiment: same design, per-replication
/// seed derived from `(master_seed, r)`.
pub fn replication_scheme(base: &ObservationScheme, master_seed: u64, r: u64) -> ObservationScheme {
    ObservationScheme { seed: derive_seed(master_seed, r), ..*base }
}
