//! Replicated Monte Carlo experiments with deterministic parallelism.
//!
//! Every replication draws its seeds from `(master_seed, r)`, results are
//! collected by replication index, and aggregation is a sequential reduction
//! in index order — so worker count and scheduling cannot change any output.

use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use rayon::prelude::*;

use ergodens::estimator::{
    debias_weights, mu_hat_value, naive_kb, nu_hat_value, DebiasWeights,
};
use ergodens::hyperparams::{
    bandwidth_star_with, choose_p, summarize, HyperparamOptions, PMode, RegimeInfo,
};
use ergodens::kernels::{make_order_kernel, Kernel1D, ProductKernel};
use ergodens::preaverage::preaverage;
use ergodens::rng::derive_seed;
use ergodens::sim::{
    add_noise, simulate_euler, simulate_ou_exact, DiffusionModel, InitialState, ObservationScheme,
    ObservationSeries,
};

use crate::config::{
    EstimatorKindConfig, ExperimentConfig, HPolicy, HPolicyName, ModelConfig, PPolicy, PPolicyName,
};

/// Run `per_rep` for `reps` replications on `workers` threads and return the
/// per-replication outputs in index order.
pub fn replicate<T, F>(reps: usize, workers: Option<usize>, per_rep: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let run = || -> Result<Vec<T>> {
        (0..reps as u64)
            .into_par_iter()
            .map(&per_rep)
            .collect::<Result<Vec<T>>>()
    };
    match workers {
        None => run(),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| anyhow!("cannot build worker pool: {e}"))?;
            pool.install(run)
        }
    }
}

/// Monte Carlo summary of one scalar estimate across replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSummary {
    pub mean: f64,
    /// Unbiased sample variance across replications.
    pub variance: f64,
    /// Bias of the mean against the target.
    pub bias: f64,
    /// `bias² + variance` (the definitional decomposition).
    pub mse: f64,
    pub se_mean: f64,
    pub se_variance: f64,
    /// Standard error of the mean squared error (from the spread of the
    /// per-replication squared errors).
    pub se_mse: f64,
}

/// Two-pass summary of replicated estimates against a known target.
pub fn summarize_against(values: &[f64], target: f64) -> McSummary {
    let r = values.len();
    assert!(r >= 2, "variance needs at least two replications");
    let rf = r as f64;
    let mean = values.iter().sum::<f64>() / rf;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (rf - 1.0);
    let bias = mean - target;
    let mse = bias * bias + variance;
    let sq_errors: Vec<f64> = values.iter().map(|v| (v - target) * (v - target)).collect();
    let sq_mean = sq_errors.iter().sum::<f64>() / rf;
    let sq_var =
        sq_errors.iter().map(|v| (v - sq_mean) * (v - sq_mean)).sum::<f64>() / (rf - 1.0);
    McSummary {
        mean,
        variance,
        bias,
        mse,
        se_mean: (variance / rf).sqrt(),
        se_variance: variance * (2.0 / (rf - 1.0)).sqrt(),
        se_mse: (sq_var / rf).sqrt(),
    }
}

/// Resolved (data-independent) parameters of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub p: usize,
    pub h: Vec<f64>,
    pub order: usize,
    pub tau_tilde: f64,
    pub regime: RegimeInfo,
}

/// Per-point aggregate of a replicated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct PointStat {
    pub x: Vec<f64>,
    pub target: Option<f64>,
    pub summary: McSummary,
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub points: Vec<PointStat>,
    pub resolved: ResolvedRun,
    pub replications: usize,
    pub flagged: usize,
    pub wall_seconds: f64,
}

/// Simulate one latent series for the configured model.
pub fn simulate_model(
    model_cfg: &ModelConfig,
    model: &DiffusionModel,
    scheme: &ObservationScheme,
) -> Result<ObservationSeries> {
    Ok(match model_cfg {
        ModelConfig::Ou { theta, dimension } => {
            simulate_ou_exact(*theta, *dimension, scheme, InitialState::Stationary)?
        }
        ModelConfig::DoubleWell { substeps, .. } => {
            simulate_euler(model, scheme, *substeps, InitialState::Stationary)?
        }
    })
}

/// Resolve the block size from the policy.
pub fn resolve_p(cfg: &ExperimentConfig, regime: &RegimeInfo) -> Result<usize> {
    Ok(match cfg.estimator.p_policy {
        PPolicy::Fixed { fixed } => fixed,
        PPolicy::Named(PPolicyName::Numeric) => {
            choose_p(cfg.scheme.tau, cfg.scheme.delta, regime.alpha1(), PMode::Numeric)?
        }
        PPolicy::Named(PPolicyName::Debias) => {
            choose_p(cfg.scheme.tau, cfg.scheme.delta, regime.alpha1(), PMode::Debias)?
        }
    })
}

/// Resolve bandwidths from the policy (the adaptive policy is handled by the
/// `adapt` code path and is rejected here).
pub fn resolve_h(cfg: &ExperimentConfig, regime: &RegimeInfo, p: usize) -> Result<Vec<f64>> {
    match &cfg.estimator.h_policy {
        HPolicy::Fixed { fixed } => Ok(fixed.clone()),
        HPolicy::Named(HPolicyName::Star) => {
            let options =
                HyperparamOptions { w_constant: cfg.estimator.w_constant, ..Default::default() };
            Ok(bandwidth_star_with(regime, cfg.scheme.n, cfg.scheme.delta, p, &options)?)
        }
        HPolicy::Named(HPolicyName::Gl) => {
            bail!("h_policy = \"gl\" is only available through the `adapt` subcommand")
        }
    }
}

/// Per-replication estimates at each evaluation point.
#[allow(clippy::too_many_arguments)]
fn estimates_for_replication(
    cfg: &ExperimentConfig,
    model: &DiffusionModel,
    base_kernel: &Kernel1D,
    weights: Option<&DebiasWeights>,
    p: usize,
    h: &[f64],
    points: &[Vec<f64>],
    rep: u64,
) -> Result<Vec<f64>> {
    let scheme = ObservationScheme::new(
        cfg.scheme.n,
        cfg.scheme.delta,
        cfg.scheme.tau,
        derive_seed(cfg.master_seed, rep),
    )?;
    let latent = simulate_model(&cfg.model, model, &scheme)?;
    let noisy = add_noise(&latent, cfg.scheme.tau, scheme.seed)?;
    let pk = ProductKernel::new(base_kernel.clone(), h.to_vec())?;
    let mut out = Vec::with_capacity(points.len());
    match cfg.estimator.kind {
        EstimatorKindConfig::Naive => {
            for x in points {
                out.push(naive_kb(&noisy, &pk, x).value);
            }
        }
        EstimatorKindConfig::Preaveraged => {
            let sample = preaverage(&noisy, p)?;
            for x in points {
                out.push(nu_hat_value(&sample, &pk, x));
            }
        }
        EstimatorKindConfig::Debiased => {
            let sample = preaverage(&noisy, p)?;
            let w = weights.expect("weights resolved for debiased estimator");
            for x in points {
                out.push(mu_hat_value(&sample, &pk, w, x)?);
            }
        }
    }
    Ok(out)
}

/// Run a replicated experiment described by a configuration.
///
/// Replications whose estimate is non-finite are flagged; the run aborts if
/// more than 1% are flagged.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentResult> {
    let start = Instant::now();
    cfg.validate().map_err(|e| anyhow!("invalid configuration: {e}"))?;
    let model = cfg.model.build()?;
    if !model.has_analytic_density() {
        bail!("bias/MSE reporting requires a model with an analytic invariant density");
    }
    if cfg.replications < 2 {
        bail!("variance estimation requires at least 2 replications");
    }
    let regime = summarize(&cfg.holder_alpha())?;
    let p = resolve_p(cfg, &regime)?;
    let h = resolve_h(cfg, &regime, p)?;
    let base_kernel = make_order_kernel(cfg.estimator.order)?;
    let weights = match cfg.estimator.kind {
        EstimatorKindConfig::Debiased => Some(debias_weights(cfg.estimator.order)?),
        _ => None,
    };
    let points = cfg.eval_points();

    let raw: Vec<Vec<f64>> = replicate(cfg.replications, workers, |rep| {
        estimates_for_replication(
            cfg,
            &model,
            &base_kernel,
            weights.as_ref(),
            p,
            &h,
            &points,
            rep,
        )
    })?;

    let flagged = raw.iter().filter(|vals| vals.iter().any(|v| !v.is_finite())).count();
    if flagged * 100 > cfg.replications {
        return Err(anyhow::Error::new(ergodens::Error::Numerical(format!(
            "{flagged} of {} replications produced non-finite estimates",
            cfg.replications
        ))));
    }

    let mut stats = Vec::with_capacity(points.len());
    for (i, x) in points.iter().enumerate() {
        let values: Vec<f64> = raw
            .iter()
            .filter(|vals| vals.iter().all(|v| v.is_finite()))
            .map(|vals| vals[i])
            .collect();
        let target = model.analytic_density(x).expect("analytic density checked");
        stats.push(PointStat {
            x: x.clone(),
            target: Some(target),
            summary: summarize_against(&values, target),
        });
    }

    let tau_tilde =
        ergodens::preaverage::effective_noise(cfg.scheme.tau, cfg.scheme.delta, p);
    Ok(ExperimentResult {
        points: stats,
        resolved: ResolvedRun { p, h, order: cfg.estimator.order, tau_tilde, regime },
        replications: cfg.replications,
        flagged,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Ordinary least squares of `log(y)` on `log(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub se_slope: f64,
    pub r_squared: f64,
}

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        bail!("log-log fit needs at least 3 matched points");
    }
    if xs.iter().chain(ys.iter()).any(|&v| !(v > 0.0)) {
        bail!("log-log fit needs positive inputs");
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = lx.iter().zip(ly.iter()).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(ly.iter())
        .map(|(a, b)| {
            let fit = intercept + slope * a;
            (b - fit) * (b - fit)
        })
        .sum();
    let dof = (lx.len() - 2) as f64;
    let se_slope = (rss / dof / sxx).sqrt();
    let r_squared = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    Ok(LogLogFit { slope, intercept, se_slope, r_squared })
}
