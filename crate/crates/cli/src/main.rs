//! Command-line interface: simulation, pointwise estimation, hyperparameter
//! plans, adaptive bandwidth selection, and the reproduction benchmarks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ergodens::adaptive::{build_grid, gl_select, GlConfig, GlEstimator};
use ergodens::estimator::{debias_weights, mu_hat_value, nu_hat_value};
use ergodens::hyperparams::{plan, summarize, HyperparamOptions, PMode};
use ergodens::kernels::{make_order_kernel, ProductKernel};
use ergodens::preaverage::preaverage;
use ergodens::rng::derive_seed;
use ergodens::sim::{add_noise, ObservationScheme};

use ergodens_cli::config::{ExperimentConfig, ModelConfig, Overrides};
use ergodens_cli::csvout::{fmt, OutDir};
use ergodens_cli::tables::{self, BenchDesign};
use ergodens_cli::harness;

#[derive(Parser)]
#[command(
    name = "ergodens",
    version,
    about = "Invariant-density estimation for ergodic diffusions under measurement noise"
)]
struct Cli {
    /// TOML experiment configuration; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for replications (defaults to all cores).
    #[arg(long, global = true, env = "ERGODENS_WORKERS")]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Suppress the timestamp header line, making outputs byte-stable.
    #[arg(long, global = true)]
    no_timestamp: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one noisy observation series and export it as CSV.
    Simulate(SchemeArgs),
    /// Estimate the invariant density at a list of points.
    Estimate(EstimateArgs),
    /// Print and export the closed-form hyperparameter plan.
    Plan(PlanArgs),
    /// Adaptive bandwidth selection (d >= 3) with trace export.
    Adapt(AdaptArgs),
    /// Reproduction benchmarks.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Args, Clone)]
struct SchemeArgs {
    /// Number of observation intervals.
    #[arg(long)]
    n: Option<usize>,
    /// Sampling interval.
    #[arg(long)]
    delta: Option<f64>,
    /// Noise level.
    #[arg(long)]
    tau: Option<f64>,
    /// Drift parameter of the reference model.
    #[arg(long)]
    theta: Option<f64>,
    /// State dimension of the reference model.
    #[arg(long)]
    dimension: Option<usize>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Evaluation points, semicolon-separated: "0,0;0.5,0".
    #[arg(long)]
    points: Option<String>,
    /// Kernel / debiasing order.
    #[arg(long)]
    order: Option<usize>,
    /// Fixed block size (overrides the policy).
    #[arg(long)]
    p: Option<usize>,
    /// Fixed bandwidths, comma-separated (overrides the policy).
    #[arg(long, value_delimiter = ',')]
    h: Option<Vec<f64>>,
}

#[derive(Args)]
struct PlanArgs {
    /// Smoothness indices, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 1 << 14)]
    n: usize,
    #[arg(long, default_value_t = 0.0078125)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, value_enum, default_value_t = PModeArg::Numeric)]
    p_mode: PModeArg,
    /// Proportionality constant in the regime comparison.
    #[arg(long, default_value_t = 1.0)]
    w_constant: f64,
}

#[derive(Args)]
struct AdaptArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Fixed block size (default: the numeric rule).
    #[arg(long)]
    p: Option<usize>,
    /// Penalty constant.
    #[arg(long)]
    omega_bar: Option<f64>,
    /// Compare plain (non-debiased) estimators.
    #[arg(long)]
    plain: bool,
    /// Selection point, comma-separated coordinates (default: origin).
    #[arg(long)]
    point: Option<String>,
    #[arg(long)]
    order: Option<usize>,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Bias-correction comparison at x = 0.
    Table1(TableArgs),
    /// Pointwise quadratic error over block sizes and points.
    Table2(TableArgs),
    /// Two-dimensional density surface (CSV + gnuplot script).
    Surface(SurfaceArgs),
    /// Convergence-rate regression over a ladder of n.
    Rates(RatesArgs),
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long)]
    replications: Option<usize>,
    /// Kernel bandwidth (default: 1/T).
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Debiasing order for the comparison table.
    #[arg(long)]
    order: Option<usize>,
}

#[derive(Args)]
struct SurfaceArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Replications to average over (1 reproduces a single-run figure).
    #[arg(long)]
    replications: Option<usize>,
    /// Half-width of the square evaluation grid.
    #[arg(long, default_value_t = 3.0)]
    half_width: f64,
    /// Grid points per axis.
    #[arg(long, default_value_t = 41)]
    steps: usize,
}

#[derive(Args)]
struct RatesArgs {
    #[arg(long, default_value_t = 10)]
    min_exp: u32,
    #[arg(long, default_value_t = 16)]
    max_exp: u32,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, value_enum, default_value_t = PModeArg::Numeric)]
    p_mode: PModeArg,
    /// Evaluation point.
    #[arg(long, default_value_t = 0.0)]
    point: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PModeArg {
    Numeric,
    Debias,
}

impl From<PModeArg> for PMode {
    fn from(v: PModeArg) -> Self {
        match v {
            PModeArg::Numeric => PMode::Numeric,
            PModeArg::Debias => PMode::Debias,
        }
    }
}

/// Reference configuration used when no file is given: the 1-D model
/// `V(x) = x²/4` observed n = 2^14 times at Δ = 2^-7 under unit noise.
fn reference_config() -> ExperimentConfig {
    toml::from_str(
        r#"
        [model]
        kind = "ou"
        theta = 0.5
        dimension = 1

        [scheme]
        n = 16384
        delta = 0.0078125
        tau = 1.0
        "#,
    )
    .expect("reference configuration parses")
}

fn load_config(cli: &Cli, scheme: &SchemeArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => reference_config(),
    };
    if let (ModelConfig::Ou { theta, dimension }, args) = (&mut cfg.model, scheme) {
        if let Some(t) = args.theta {
            *theta = t;
        }
        if let Some(d) = args.dimension {
            *dimension = d;
        }
    }
    cfg.apply(&Overrides {
        seed: cli.seed,
        n: scheme.n,
        delta: scheme.delta,
        tau: scheme.tau,
        ..Default::default()
    });
    cfg.validate()?;
    Ok(cfg)
}

fn parse_points(text: &str, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for chunk in text.split(';') {
        let p: Vec<f64> = chunk
            .split(',')
            .map(|v| v.trim().parse::<f64>().context("invalid coordinate"))
            .collect::<Result<_>>()?;
        if p.len() != dim {
            bail!("point '{chunk}' has {} coordinates, expected {dim}", p.len());
        }
        out.push(p);
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let numerical = err
                .chain()
                .filter_map(|cause| cause.downcast_ref::<ergodens::Error>())
                .any(|e| matches!(e, ergodens::Error::Numerical(_) | ergodens::Error::Simulation { .. }));
            if numerical {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let out = OutDir::new(&cli.out, !cli.no_timestamp)?;
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(cli, args, &out),
        Command::Estimate(args) => cmd_estimate(cli, args, &out),
        Command::Plan(args) => cmd_plan(args, &out),
        Command::Adapt(args) => cmd_adapt(cli, args, &out),
        Command::Bench(which) => cmd_bench(cli, which, &out),
    }
}

fn cmd_simulate(cli: &Cli, args: &SchemeArgs, out: &OutDir) -> Result<()> {
    let cfg = load_config(cli, args)?;
    let model = cfg.model.build()?;
    let scheme = ObservationScheme::new(
        cfg.scheme.n,
        cfg.scheme.delta,
        cfg.scheme.tau,
        derive_seed(cfg.master_seed, 0),
    )?;
    let latent = harness::simulate_model(&cfg.model, &model, &scheme)?;
    let noisy = add_noise(&latent, cfg.scheme.tau, scheme.seed)?;
    let mut w = out.create("series.csv")?;
    noisy.write_csv(&mut w)?;
    eprintln!("wrote {} ({} rows)", out.path("series.csv").display(), noisy.len());
    Ok(())
}

fn cmd_estimate(cli: &Cli, args: &EstimateArgs, out: &OutDir) -> Result<()> {
    let mut cfg = load_config(cli, &args.scheme)?;
    cfg.apply(&Overrides {
        order: args.order,
        p_fixed: args.p,
        h_fixed: args.h.clone(),
        ..Default::default()
    });
    cfg.validate()?;
    let d = cfg.model.dimension();
    let points = match &args.points {
        Some(text) => parse_points(text, d)?,
        None => cfg.eval_points(),
    };

    let model = cfg.model.build()?;
    let regime = summarize(&cfg.holder_alpha())?;
    let p = harness::resolve_p(&cfg, &regime)?;
    let h = harness::resolve_h(&cfg, &regime, p)?;
    let scheme = ObservationScheme::new(
        cfg.scheme.n,
        cfg.scheme.delta,
        cfg.scheme.tau,
        derive_seed(cfg.master_seed, 0),
    )?;
    let latent = harness::simulate_model(&cfg.model, &model, &scheme)?;
    let noisy = add_noise(&latent, cfg.scheme.tau, scheme.seed)?;
    let sample = preaverage(&noisy, p)?;
    let base = make_order_kernel(cfg.estimator.order)?;
    let pk = ProductKernel::new(base, h.clone())?;
    let weights = debias_weights(cfg.estimator.order)?;

    let mut w = out.create("density.csv")?;
    for j in 1..=d {
        write!(w, "x_{j},")?;
    }
    if model.has_analytic_density() {
        writeln!(w, "nu_hat,mu_hat,target")?;
    } else {
        writeln!(w, "nu_hat,mu_hat")?;
    }
    for x in &points {
        for c in x {
            write!(w, "{},", fmt(*c))?;
        }
        let nu = nu_hat_value(&sample, &pk, x);
        let mu = mu_hat_value(&sample, &pk, &weights, x)?;
        match model.analytic_density(x) {
            Some(t) => writeln!(w, "{},{},{}", fmt(nu), fmt(mu), fmt(t))?,
            None => writeln!(w, "{},{}", fmt(nu), fmt(mu))?,
        }
    }
    eprintln!(
        "wrote {} (p = {p}, h = {:?}, tau_tilde = {})",
        out.path("density.csv").display(),
        h,
        sample.tau_tilde()
    );
    Ok(())
}

fn cmd_plan(args: &PlanArgs, out: &OutDir) -> Result<()> {
    let regime = summarize(&args.alpha)?;
    let options = HyperparamOptions { w_constant: args.w_constant, ..Default::default() };
    let p = plan(&regime, args.n, args.delta, args.tau, args.p_mode.into(), &options)?;
    let text = p.export();
    print!("{text}");
    let mut w = out.create("plan.txt")?;
    w.write_all(text.as_bytes())?;
    Ok(())
}

fn cmd_adapt(cli: &Cli, args: &AdaptArgs, out: &OutDir) -> Result<()> {
    let mut cfg = load_config(cli, &args.scheme)?;
    if args.scheme.dimension.is_none() && cli.config.is_none() {
        // the reference config is one-dimensional; adaptive selection needs 3+
        if let ModelConfig::Ou { dimension, .. } = &mut cfg.model {
            *dimension = 3;
        }
    }
    cfg.validate()?;
    let d = cfg.model.dimension();
    let model = cfg.model.build()?;
    let regime = summarize(&cfg.holder_alpha())?;
    let p = match args.p {
        Some(p) => p,
        None => harness::resolve_p(&cfg, &regime)?,
    };
    let x = match &args.point {
        Some(text) => {
            let pts = parse_points(text, d)?;
            pts.into_iter().next().ok_or_else(|| anyhow!("empty point"))?
        }
        None => vec![0.0; d],
    };

    let scheme = ObservationScheme::new(
        cfg.scheme.n,
        cfg.scheme.delta,
        cfg.scheme.tau,
        derive_seed(cfg.master_seed, 0),
    )?;
    let latent = harness::simulate_model(&cfg.model, &model, &scheme)?;
    let noisy = add_noise(&latent, cfg.scheme.tau, scheme.seed)?;
    let sample = preaverage(&noisy, p)?;
    let grid = build_grid(sample.count(), scheme.horizon(), d)?;
    let order = args.order.unwrap_or(cfg.estimator.order);
    let base = make_order_kernel(order)?;
    let weights = debias_weights(order)?;
    let gl_cfg = GlConfig {
        omega_bar: args.omega_bar.unwrap_or(cfg.estimator.omega_bar),
        estimator: if args.plain { GlEstimator::Plain } else { GlEstimator::Debiased },
    };
    let (selected, state) = gl_select(&sample, &grid, &base, &weights, &x, &gl_cfg)?;

    let mut w = out.create("gl_trace.csv")?;
    state.write_trace(&mut w)?;
    println!("selected_h=[{}]", selected.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(","));
    println!("candidates={}", grid.len());
    println!("floor={}", fmt(grid.floor()));
    println!("p={p}");
    eprintln!("wrote {}", out.path("gl_trace.csv").display());
    Ok(())
}

fn cmd_bench(cli: &Cli, which: &BenchCmd, out: &OutDir) -> Result<()> {
    let scheme_args = match which {
        BenchCmd::Table1(t) | BenchCmd::Table2(t) => t.scheme.clone(),
        BenchCmd::Surface(s) => s.scheme.clone(),
        BenchCmd::Rates(_) => SchemeArgs {
            n: None,
            delta: None,
            tau: None,
            theta: None,
            dimension: None,
        },
    };
    let cfg = load_config(cli, &scheme_args)?;
    let mut design = BenchDesign {
        n: cfg.scheme.n,
        delta: cfg.scheme.delta,
        tau: cfg.scheme.tau,
        replications: cfg.replications,
        master_seed: cfg.master_seed,
    };

    match which {
        BenchCmd::Table2(args) => {
            if let Some(r) = args.replications {
                design.replications = r;
            }
            let horizon = design.n as f64 * design.delta;
            let bandwidth = args.bandwidth.unwrap_or(1.0 / horizon);
            let sweep = tables::block_sweep(&design, bandwidth, cli.workers)?;
            tables::write_block_sweep(&sweep, out, "table2.csv")?;
            println!("p_star={}", sweep.p_star);
            println!("bandwidth={}", fmt(sweep.bandwidth));
            for row in &sweep.rows {
                println!(
                    "p={}: mse@0={:.4e} (se {:.1e})",
                    row.p, row.cells[0].mse, row.cells[0].se_mse
                );
            }
            eprintln!("wrote {}", out.path("table2.csv").display());
        }
        BenchCmd::Table1(args) => {
            match args.replications {
                Some(r) => design.replications = r,
                // The debiased estimator's bias is an order of magnitude
                // smaller than its Monte Carlo standard error at R = 100;
                // the comparison needs more replications to resolve.
                None => design.replications = design.replications.max(4000),
            }
            let horizon = design.n as f64 * design.delta;
            let bandwidth = args.bandwidth.unwrap_or(1.0 / horizon);
            let order = args.order.unwrap_or(2);
            let t = tables::bias_correction(&design, bandwidth, order, cli.workers)?;
            tables::write_bias_correction(&t, out, "table1.csv")?;
            println!(
                "nu_hat: error={:.4e} bias={:.4e} variance={:.4e}",
                t.plain.mse, t.plain.bias, t.plain.variance
            );
            println!(
                "mu_hat: error={:.4e} bias={:.4e} variance={:.4e}",
                t.debiased.mse, t.debiased.bias, t.debiased.variance
            );
            eprintln!("wrote {}", out.path("table1.csv").display());
        }
        BenchCmd::Surface(args) => {
            design.replications = args.replications.unwrap_or(1);
            let s = tables::surface(&design, args.half_width, args.steps, cli.workers)?;
            tables::write_surface(&s, out, "surface.csv", "surface.gp")?;
            println!("msd_naive={}", fmt(s.msd(&s.naive)));
            println!("msd_preavg={}", fmt(s.msd(&s.preavg)));
            eprintln!(
                "wrote {} and {}",
                out.path("surface.csv").display(),
                out.path("surface.gp").display()
            );
        }
        BenchCmd::Rates(args) => {
            if args.min_exp + 2 > args.max_exp {
                bail!("rates ladder needs at least 3 sizes (min_exp + 2 <= max_exp)");
            }
            let tau = args.tau.unwrap_or(design.tau);
            let reps = args.replications.unwrap_or(256);
            let r = tables::rate_regression(
                args.min_exp..=args.max_exp,
                tau,
                reps,
                design.master_seed,
                args.p_mode.into(),
                args.point,
                cli.workers,
            )?;
            tables::write_rates(&r, out, "rates.csv", "rates_fit.csv")?;
            println!(
                "slope={:.4} se={:.4} theory={:.4} r2={:.4}",
                r.fit.slope, r.fit.se_slope, r.theory_slope, r.fit.r_squared
            );
            eprintln!(
                "wrote {} and {}",
                out.path("rates.csv").display(),
                out.path("rates_fit.csv").display()
            );
        }
    }
    Ok(())
}
