//! Reproduction benchmarks: the block-size sweep (pointwise quadratic error
//! by `p` and `x`), the bias-correction comparison, the two-dimensional
//! density surface, and the convergence-rate regression.
//!
//! All benchmarks run on the reference model `V(x) = |x|²/4` (drift `-x/2`),
//! whose invariant density is standard normal.

use std::io::Write;

use anyhow::{bail, Result};

use ergodens::estimator::{debias_weights, mu_hat_value, nu_hat_value};
use ergodens::hyperparams::{
    bandwidth_star, choose_p, predicted_rate, summarize, PMode,
};
use ergodens::kernels::{make_order_kernel, ProductKernel};
use ergodens::preaverage::preaverage;
use ergodens::rng::derive_seed;
use ergodens::sim::{add_noise, simulate_ou_exact, InitialState, ObservationScheme};

use crate::csvout::{fmt, OutDir};
use crate::harness::{fit_loglog, replicate, summarize_against, LogLogFit, McSummary};

const OU_THETA: f64 = 0.5;

fn standard_normal_density(x: &[f64]) -> f64 {
    let d = x.len() as i32;
    let norm = (2.0 * std::f64::consts::PI).powi(d).sqrt();
    (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp() / norm
}

/// Shared design of the reference experiments.
#[derive(Debug, Clone, Copy)]
pub struct BenchDesign {
    pub n: usize,
    pub delta: f64,
    pub tau: f64,
    pub replications: usize,
    pub master_seed: u64,
}

impl Default for BenchDesign {
    fn default() -> Self {
        Self { n: 1 << 14, delta: 2f64.powi(-7), tau: 1.0, replications: 100, master_seed: 42 }
    }
}

// ---------------------------------------------------------------------------
// block-size sweep (pointwise quadratic error table)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BlockSweepRow {
    pub p: usize,
    pub cells: Vec<McSummary>,
}

#[derive(Debug, Clone)]
pub struct BlockSweep {
    pub xs: Vec<f64>,
    pub rows: Vec<BlockSweepRow>,
    pub p_star: usize,
    pub bandwidth: f64,
}

/// Pointwise quadratic error of the pre-averaged estimator for block sizes
/// `{1, 16, p*, 1024, 4096}` at `x ∈ {0, 0.25, 0.5, 0.75, 1}`.
///
/// Every replication simulates one series and evaluates all block sizes on
/// it, so rows are positively coupled and the row ordering is less noisy
/// than independent runs would be.
pub fn block_sweep(
    design: &BenchDesign,
    bandwidth: f64,
    workers: Option<usize>,
) -> Result<BlockSweep> {
    let xs = vec![0.0, 0.25, 0.5, 0.75, 1.0];
    let p_star = choose_p(design.tau, design.delta, 2.0, PMode::Numeric)?;
    let ps = vec![1usize, 16, p_star, 1024, 4096];
    if design.n < 4096 {
        bail!("the block sweep needs n >= 4096 for its largest row");
    }
    let base = make_order_kernel(2)?;
    let pk = ProductKernel::new(base, vec![bandwidth])?;

    let raw: Vec<Vec<f64>> = replicate(design.replications, workers, |rep| {
        let scheme = ObservationScheme::new(
            design.n,
            design.delta,
            design.tau,
            derive_seed(design.master_seed, rep),
        )?;
        let latent = simulate_ou_exact(OU_THETA, 1, &scheme, InitialState::Stationary)?;
        let noisy = add_noise(&latent, design.tau, scheme.seed)?;
        let mut values = Vec::with_capacity(ps.len() * xs.len());
        for &p in &ps {
            let sample = preaverage(&noisy, p)?;
            for &x in &xs {
                values.push(nu_hat_value(&sample, &pk, &[x]));
            }
        }
        Ok(values)
    })?;

    let mut rows = Vec::with_capacity(ps.len());
    for (pi, &p) in ps.iter().enumerate() {
        let mut cells = Vec::with_capacity(xs.len());
        for (xi, &x) in xs.iter().enumerate() {
            let values: Vec<f64> = raw.iter().map(|v| v[pi * xs.len() + xi]).collect();
            cells.push(summarize_against(&values, standard_normal_density(&[x])));
        }
        rows.push(BlockSweepRow { p, cells });
    }
    Ok(BlockSweep { xs, rows, p_star, bandwidth })
}

pub fn write_block_sweep(sweep: &BlockSweep, out: &OutDir, name: &str) -> Result<()> {
    let mut w = out.create(name)?;
    write!(w, "p")?;
    for x in &sweep.xs {
        write!(w, ",mse_{x}")?;
    }
    for x in &sweep.xs {
        write!(w, ",se_{x}")?;
    }
    writeln!(w)?;
    for row in &sweep.rows {
        write!(w, "{}", row.p)?;
        for c in &row.cells {
            write!(w, ",{}", fmt(c.mse))?;
        }
        for c in &row.cells {
            write!(w, ",{}", fmt(c.se_mse))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bias-correction comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BiasCorrection {
    pub plain: McSummary,
    pub debiased: McSummary,
    pub p: usize,
    pub bandwidth: f64,
    pub x: f64,
}

/// Error/bias/variance of the plain and the debiased estimator at `x = 0`
/// under the reference design, sharing data across the two estimators.
pub fn bias_correction(
    design: &BenchDesign,
    bandwidth: f64,
    order: usize,
    workers: Option<usize>,
) -> Result<BiasCorrection> {
    let p = choose_p(design.tau, design.delta, 2.0, PMode::Numeric)?;
    let base = make_order_kernel(order)?;
    let pk = ProductKernel::new(base, vec![bandwidth])?;
    let weights = debias_weights(order)?;
    let x = [0.0];

    let raw: Vec<Vec<f64>> = replicate(design.replications, workers, |rep| {
        let scheme = ObservationScheme::new(
            design.n,
            design.delta,
            design.tau,
            derive_seed(design.master_seed, rep),
        )?;
        let latent = simulate_ou_exact(OU_THETA, 1, &scheme, InitialState::Stationary)?;
        let noisy = add_noise(&latent, design.tau, scheme.seed)?;
        let sample = preaverage(&noisy, p)?;
        Ok(vec![
            nu_hat_value(&sample, &pk, &x),
            mu_hat_value(&sample, &pk, &weights, &x)?,
        ])
    })?;

    let target = standard_normal_density(&x);
    let plain: Vec<f64> = raw.iter().map(|v| v[0]).collect();
    let debiased: Vec<f64> = raw.iter().map(|v| v[1]).collect();
    Ok(BiasCorrection {
        plain: summarize_against(&plain, target),
        debiased: summarize_against(&debiased, target),
        p,
        bandwidth,
        x: 0.0,
    })
}

pub fn write_bias_correction(t: &BiasCorrection, out: &OutDir, name: &str) -> Result<()> {
    let mut w = out.create(name)?;
    writeln!(w, "estimator,error,bias,variance,se_error,se_bias,se_variance")?;
    for (label, s) in [("nu_hat", &t.plain), ("mu_hat", &t.debiased)] {
        writeln!(
            w,
            "{label},{},{},{},{},{},{}",
            fmt(s.mse),
            fmt(s.bias),
            fmt(s.variance),
            fmt(s.se_mse),
            fmt(s.se_mean),
            fmt(s.se_variance)
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// two-dimensional density surface
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Surface {
    pub points: Vec<(f64, f64)>,
    pub target: Vec<f64>,
    pub naive: Vec<f64>,
    pub preavg: Vec<f64>,
    pub p_star: usize,
    pub h_naive: f64,
    pub h_preavg: f64,
}

/// Evaluate the target density, the `p = 1` estimate, and the `p = p*`
/// estimate on a square grid, averaged over the replications (one
/// replication reproduces the single-run picture).
pub fn surface(
    design: &BenchDesign,
    half_width: f64,
    steps: usize,
    workers: Option<usize>,
) -> Result<Surface> {
    if steps < 2 {
        bail!("surface grid needs at least 2 steps per axis");
    }
    let regime = summarize(&[2.0, 2.0])?;
    let p_star = choose_p(design.tau, design.delta, 2.0, PMode::Numeric)?;
    let h_naive = bandwidth_star(&regime, design.n, design.delta, 1)?[0];
    let h_preavg = bandwidth_star(&regime, design.n, design.delta, p_star)?[0];
    let base = make_order_kernel(2)?;
    let pk_naive = ProductKernel::new(base.clone(), vec![h_naive; 2])?;
    let pk_pre = ProductKernel::new(base, vec![h_preavg; 2])?;

    let mut points = Vec::with_capacity(steps * steps);
    let step = 2.0 * half_width / (steps - 1) as f64;
    for i in 0..steps {
        for j in 0..steps {
            points.push((-half_width + i as f64 * step, -half_width + j as f64 * step));
        }
    }

    let raw: Vec<Vec<f64>> = replicate(design.replications, workers, |rep| {
        let scheme = ObservationScheme::new(
            design.n,
            design.delta,
            design.tau,
            derive_seed(design.master_seed, rep),
        )?;
        let latent = simulate_ou_exact(OU_THETA, 2, &scheme, InitialState::Stationary)?;
        let noisy = add_noise(&latent, design.tau, scheme.seed)?;
        let raw_sample = preaverage(&noisy, 1)?;
        let pre_sample = preaverage(&noisy, p_star)?;
        let mut values = Vec::with_capacity(2 * points.len());
        for &(x1, x2) in &points {
            values.push(nu_hat_value(&raw_sample, &pk_naive, &[x1, x2]));
        }
        for &(x1, x2) in &points {
            values.push(nu_hat_value(&pre_sample, &pk_pre, &[x1, x2]));
        }
        Ok(values)
    })?;

    let m = points.len();
    let r = design.replications as f64;
    let mut naive = vec![0.0; m];
    let mut preavg = vec![0.0; m];
    for rep in &raw {
        for i in 0..m {
            naive[i] += rep[i] / r;
            preavg[i] += rep[m + i] / r;
        }
    }
    let target: Vec<f64> = points.iter().map(|&(a, b)| standard_normal_density(&[a, b])).collect();
    Ok(Surface { points, target, naive, preavg, p_star, h_naive, h_preavg })
}

impl Surface {
    /// Mean squared deviation of a column from the target over the grid.
    pub fn msd(&self, column: &[f64]) -> f64 {
        column
            .iter()
            .zip(self.target.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / column.len() as f64
    }
}

pub fn write_surface(s: &Surface, out: &OutDir, csv_name: &str, gp_name: &str) -> Result<()> {
    let mut w = out.create(csv_name)?;
    writeln!(w, "x1,x2,target,naive,preavg")?;
    for (i, &(x1, x2)) in s.points.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt(x1),
            fmt(x2),
            fmt(s.target[i]),
            fmt(s.naive[i]),
            fmt(s.preavg[i])
        )?;
    }
    drop(w);

    let mut g = out.create(gp_name)?;
    writeln!(g, "# gnuplot script: density heatmaps (target vs estimators)")?;
    writeln!(g, "set datafile separator comma")?;
    writeln!(g, "set key autotitle columnhead")?;
    writeln!(g, "set terminal pngcairo size 1500,520")?;
    writeln!(g, "set output 'surface.png'")?;
    writeln!(g, "set multiplot layout 1,3")?;
    writeln!(g, "set size ratio -1")?;
    writeln!(g, "set title 'target density'")?;
    writeln!(g, "plot '{csv_name}' using 1:2:3 with image notitle")?;
    writeln!(g, "set title 'no preaveraging (p=1)'")?;
    writeln!(g, "plot '{csv_name}' using 1:2:4 with image notitle")?;
    writeln!(g, "set title 'preaveraged (p={})'", s.p_star)?;
    writeln!(g, "plot '{csv_name}' using 1:2:5 with image notitle")?;
    writeln!(g, "unset multiplot")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// convergence-rate regression
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RateRow {
    pub n: usize,
    pub delta: f64,
    pub p: usize,
    pub h: f64,
    pub mse: f64,
    pub se: f64,
}

#[derive(Debug, Clone)]
pub struct RateRegression {
    pub rows: Vec<RateRow>,
    pub fit: LogLogFit,
    pub theory_slope: f64,
}

/// Fit `log(MSE)` against `log(n)` over a geometric ladder with
/// `Δ = n^{-1/2}` and constant noise, and compare with the slope implied by
/// the predicted rate.
pub fn rate_regression(
    exponents: std::ops::RangeInclusive<u32>,
    tau: f64,
    replications: usize,
    master_seed: u64,
    p_mode: PMode,
    x: f64,
    workers: Option<usize>,
) -> Result<RateRegression> {
    let regime = summarize(&[2.0])?;
    let mut rows = Vec::new();
    let mut predicted = Vec::new();
    for k in exponents.clone() {
        let n = 1usize << k;
        let delta = (n as f64).powf(-0.5);
        let p = choose_p(tau, delta, regime.alpha1(), p_mode)?;
        let h = bandwidth_star(&regime, n, delta, p)?[0];
        let base = make_order_kernel(2)?;
        let pk = ProductKernel::new(base, vec![h])?;

        let estimates: Vec<Vec<f64>> = replicate(replications, workers, |rep| {
            let scheme =
                ObservationScheme::new(n, delta, tau, derive_seed(master_seed, (k as u64) << 32 | rep))?;
            let latent = simulate_ou_exact(OU_THETA, 1, &scheme, InitialState::Stationary)?;
            let noisy = add_noise(&latent, tau, scheme.seed)?;
            let sample = preaverage(&noisy, p)?;
            Ok(vec![nu_hat_value(&sample, &pk, &[x])])
        })?;
        let values: Vec<f64> = estimates.iter().map(|v| v[0]).collect();
        let s = summarize_against(&values, standard_normal_density(&[x]));
        rows.push(RateRow { n, delta, p, h, mse: s.mse, se: s.se_mse });
        predicted.push(predicted_rate(&regime, tau, delta, n, p)?);
    }

    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let mses: Vec<f64> = rows.iter().map(|r| r.mse).collect();
    let fit = fit_loglog(&ns, &mses)?;
    let theory_slope = (predicted.last().unwrap().ln() - predicted[0].ln())
        / (ns.last().unwrap().ln() - ns[0].ln());
    Ok(RateRegression { rows, fit, theory_slope })
}

pub fn write_rates(r: &RateRegression, out: &OutDir, rows_name: &str, fit_name: &str) -> Result<()> {
    let mut w = out.create(rows_name)?;
    writeln!(w, "n,delta,p,h,mse,se")?;
    for row in &r.rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            row.n,
            fmt(row.delta),
            row.p,
            fmt(row.h),
            fmt(row.mse),
            fmt(row.se)
        )?;
    }
    drop(w);
    let mut f = out.create(fit_name)?;
    writeln!(f, "slope,se_slope,intercept,r_squared,theory_slope")?;
    writeln!(
        f,
        "{},{},{},{},{}",
        fmt(r.fit.slope),
        fmt(r.fit.se_slope),
        fmt(r.fit.intercept),
        fmt(r.fit.r_squared),
        fmt(r.theory_slope)
    )?;
    Ok(())
}
