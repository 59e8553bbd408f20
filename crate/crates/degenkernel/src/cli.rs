//! Command-line front end: evaluate kernels and solutions, produce table
//! data, classify boundaries, run simulations and the self-verification
//! suite.
//!
//! Exit codes: 0 success, 1 usage error, 2 domain/validation error,
//! 3 numeric non-convergence. All numeric output is printed with 17
//! significant digits so values round-trip losslessly through text.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::closed_forms;
use crate::duhamel::PotentialKernel;
use crate::expr;
use crate::general_kernel::{GeneralKernel, GeneralKernelError};
use crate::model_kernel::KernelError;
use crate::quad::QuadError;
use crate::sde::{self, SimConfig, SimError};
use crate::specfun::SpecFunError;
use crate::transform::{self, Coefficients, TransformBundle, TransformError};
use crate::{boundary, selftest};

pub enum AppError {
    Usage(String),
    Domain(String),
    Numeric(String),
}

impl AppError {
    fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Domain(_) => 2,
            AppError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Usage(m) | AppError::Domain(m) | AppError::Numeric(m) => m,
        }
    }
}

impl From<TransformError> for AppError {
    fn from(e: TransformError) -> Self {
        match e {
            TransformError::Quad(q) => AppError::Numeric(q.to_string()),
            other => AppError::Domain(other.to_string()),
        }
    }
}

impl From<KernelError> for AppError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::Quad(q) => AppError::Numeric(q.to_string()),
            KernelError::SpecFun(SpecFunError::NonConvergence(m)) => {
                AppError::Numeric(format!("{m} did not converge"))
            }
            other => AppError::Domain(other.to_string()),
        }
    }
}

impl From<GeneralKernelError> for AppError {
    fn from(e: GeneralKernelError) -> Self {
        match e {
            GeneralKernelError::Transform(t) => t.into(),
            GeneralKernelError::Kernel(k) => k.into(),
        }
    }
}

impl From<SimError> for AppError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::BadConfig(m) => AppError::Usage(m.into()),
            SimError::Transform(t) => t.into(),
        }
    }
}

impl From<QuadError> for AppError {
    fn from(e: QuadError) -> Self {
        AppError::Numeric(e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Usage(format!("i/o error: {e}"))
    }
}

#[derive(Parser)]
#[command(
    name = "degenkernel",
    version,
    about = "Kernels, estimates and simulation for degenerate diffusions absorbed at 0"
)]
struct Cli {
    /// JSON file whose fields mirror the flags; explicit flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the fundamental solution p(x, y, t) for one coefficient pair.
    Eval(EvalArgs),
    /// Evaluate p over a grid and emit CSV or JSON rows.
    Table(TableArgs),
    /// Feller boundary classification of 0 (JSON report).
    Classify(ClassifyArgs),
    /// Monte Carlo simulation of the absorbed diffusion.
    Simulate(SimulateArgs),
    /// Mass absorbed at 0 for the power family, exact and asymptotic.
    Massloss(MasslossArgs),
    /// Run the self-verification suite; exit code 0 iff every criterion passes.
    Selftest(SelftestArgs),
}

#[derive(Args, Clone, Default)]
struct CoeffArgs {
    /// Diffusion coefficient a(x) as an expression in x.
    #[arg(long)]
    a: Option<String>,
    /// Drift coefficient b(x) as an expression in x.
    #[arg(long)]
    b: Option<String>,
    /// Built-in family: "power" (a = x^alpha, b = 0) or "power+drift"
    /// (a = x^alpha, b = x^beta * phi(x)).
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Drift shape phi(x) for the power+drift family.
    #[arg(long)]
    phi: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    coeff: CoeffArgs,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    y: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    /// Series truncation order (default: smallest with certified tail 1e-6).
    #[arg(long)]
    order: Option<u32>,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    coeff: CoeffArgs,
    /// Grid spec lo:hi:n or lo:hi:n:log.
    #[arg(long = "x-grid")]
    x_grid: Option<String>,
    #[arg(long = "y-grid")]
    y_grid: Option<String>,
    #[arg(long = "t-grid")]
    t_grid: Option<String>,
    #[arg(long)]
    order: Option<u32>,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// "csv" (default) or "json".
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    coeff: CoeffArgs,
    /// Anchor point of the scale/speed integrals.
    #[arg(long)]
    x0: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    coeff: CoeffArgs,
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Enable the Brownian-bridge crossing correction.
    #[arg(long)]
    bridge: bool,
    #[arg(long)]
    bins: Option<usize>,
    /// Write the survivor histogram as CSV (bin_lo, bin_hi, mass, se).
    #[arg(long = "hist-out")]
    hist_out: Option<PathBuf>,
}

#[derive(Args)]
struct MasslossArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    /// Also print the large-degeneracy asymptotic expansion.
    #[arg(long)]
    asymptotic: bool,
}

#[derive(Args)]
struct SelftestArgs {
    /// Run only criteria whose name contains this substring.
    #[arg(long)]
    filter: Option<String>,
    /// Machine-readable JSON report instead of per-criterion lines.
    #[arg(long)]
    json: bool,
}

/// Optional JSON config mirroring the flags; flags take precedence.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    a: Option<String>,
    b: Option<String>,
    family: Option<String>,
    alpha: Option<f64>,
    beta: Option<f64>,
    phi: Option<String>,
    x: Option<f64>,
    y: Option<f64>,
    t: Option<f64>,
    order: Option<u32>,
    x0: Option<f64>,
    paths: Option<u64>,
    dt: Option<f64>,
    seed: Option<u64>,
    bridge: Option<bool>,
    bins: Option<usize>,
    x_grid: Option<String>,
    y_grid: Option<String>,
    t_grid: Option<String>,
    format: Option<String>,
    filter: Option<String>,
}

fn load_config(path: &Option<PathBuf>) -> Result<ConfigFile, AppError> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| AppError::Usage(format!("bad config file {}: {e}", p.display())))
        }
    }
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, AppError> {
    value.ok_or_else(|| AppError::Usage(format!("missing required value --{flag}")))
}

fn full(v: f64) -> String {
    format!("{v:.16e}")
}

fn expr_fn(src: &str, what: &str) -> Result<Arc<expr::Expr>, AppError> {
    expr::parse(src)
        .map(Arc::new)
        .map_err(|e| AppError::Usage(format!("in --{what} expression: {e}")))
}

fn build_coefficients(args: &CoeffArgs, cfg: &ConfigFile) -> Result<Coefficients, AppError> {
    let family = args.family.clone().or_else(|| cfg.family.clone());
    let alpha = args.alpha.or(cfg.alpha);
    match family.as_deref() {
        Some("power") => {
            let alpha = require(alpha, "alpha")?;
            if !(0.0..=2.0).contains(&alpha) {
                return Err(AppError::Domain(format!(
                    "alpha = {alpha} outside [0, 2] for the power family"
                )));
            }
            Ok(Coefficients::power(alpha))
        }
        Some("power+drift") => {
            let alpha = require(alpha, "alpha")?;
            let beta = require(args.beta.or(cfg.beta), "beta")?;
            let phi_src = require(args.phi.clone().or_else(|| cfg.phi.clone()), "phi")?;
            if !(0.0 < alpha && alpha < 2.0) {
                return Err(AppError::Domain(format!(
                    "alpha = {alpha} outside (0, 2) for the power+drift family"
                )));
            }
            if beta < 1.0 {
                return Err(AppError::Domain(format!("beta = {beta} must be >= 1")));
            }
            let phi_expr = expr_fn(&phi_src, "phi")?;
            let phi_d = phi_expr.clone();
            let phi: transform::CoefFn =
                Arc::new(move |x: f64| phi_expr.eval(x).unwrap_or(f64::NAN));
            let phi_prime: transform::CoefFn = Arc::new(move |x: f64| {
                let h = expr::Expr::default_diff_step(x).min(0.5 * x.max(1e-8));
                phi_d.diff_num(x, h).unwrap_or(f64::NAN)
            });
            Ok(Coefficients::power_drift(alpha, beta, phi, phi_prime))
        }
        Some(other) => Err(AppError::Usage(format!(
            "unknown family `{other}` (expected \"power\" or \"power+drift\")"
        ))),
        None => {
            let a_src = require(args.a.clone().or_else(|| cfg.a.clone()), "a")?;
            let b_src = args.b.clone().or_else(|| cfg.b.clone()).unwrap_or_else(|| "0".into());
            let a = expr_fn(&a_src, "a")?;
            let b = expr_fn(&b_src, "b")?;
            Ok(Coefficients::from_exprs(&a, &b))
        }
    }
}

fn build_kernel(
    args: &CoeffArgs,
    cfg: &ConfigFile,
    order: Option<u32>,
    horizon: f64,
) -> Result<GeneralKernel, AppError> {
    let coeffs = build_coefficients(args, cfg)?;
    let bundle = TransformBundle::build(coeffs)?;
    let order =
        order.unwrap_or_else(|| PotentialKernel::default_order(horizon, bundle.v_sup()));
    Ok(GeneralKernel::new(bundle, order))
}

fn parse_grid(spec: &str, flag: &str) -> Result<Vec<f64>, AppError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 && parts.len() != 4 {
        return Err(AppError::Usage(format!(
            "--{flag}: expected lo:hi:n or lo:hi:n:log, got `{spec}`"
        )));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| AppError::Usage(format!("--{flag}: bad lower bound `{}`", parts[0])))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| AppError::Usage(format!("--{flag}: bad upper bound `{}`", parts[1])))?;
    let n: usize = parts[2]
        .parse()
        .map_err(|_| AppError::Usage(format!("--{flag}: bad count `{}`", parts[2])))?;
    let log = match parts.get(3) {
        None => false,
        Some(&"log") => true,
        Some(other) => {
            return Err(AppError::Usage(format!("--{flag}: unknown modifier `{other}`")))
        }
    };
    if n == 0 || !(lo > 0.0) || !(hi >= lo) {
        return Err(AppError::Usage(format!("--{flag}: need 0 < lo <= hi and n >= 1")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64;
            if log {
                lo * (hi / lo).powf(s)
            } else {
                lo + (hi - lo) * s
            }
        })
        .collect())
}

pub fn run() -> i32 {
    if let Ok(threads) = std::env::var("DEGENKERNEL_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own message (including --help/--version).
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { 0 } else { 1 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, AppError> {
    let cfg = load_config(&cli.config)?;
    match cli.command {
        Command::Eval(args) => cmd_eval(args, &cfg),
        Command::Table(args) => cmd_table(args, &cfg),
        Command::Classify(args) => cmd_classify(args, &cfg),
        Command::Simulate(args) => cmd_simulate(args, &cfg),
        Command::Massloss(args) => cmd_massloss(args, &cfg),
        Command::Selftest(args) => cmd_selftest(args, &cfg),
    }
}

fn cmd_eval(args: EvalArgs, cfg: &ConfigFile) -> Result<i32, AppError> {
    let x = require(args.x.or(cfg.x), "x")?;
    let y = require(args.y.or(cfg.y), "y")?;
    let t = require(args.t.or(cfg.t), "t")?;
    let gk = build_kernel(&args.coeff, cfg, args.order.or(cfg.order), t)?;
    let kv = gk.p(x, y, t)?;
    println!("value               = {}", full(kv.value));
    println!("quadrature_estimate = {}", full(kv.quadrature_estimate));
    println!("truncation_bound    = {}", full(kv.truncation_bound));
    Ok(0)
}

fn cmd_table(args: TableArgs, cfg: &ConfigFile) -> Result<i32, AppError> {
    let xs = parse_grid(
        &require(args.x_grid.clone().or_else(|| cfg.x_grid.clone()), "x-grid")?,
        "x-grid",
    )?;
    let ys = parse_grid(
        &require(args.y_grid.clone().or_else(|| cfg.y_grid.clone()), "y-grid")?,
        "y-grid",
    )?;
    let ts = parse_grid(
        &require(args.t_grid.clone().or_else(|| cfg.t_grid.clone()), "t-grid")?,
        "t-grid",
    )?;
    let t_max = ts.iter().cloned().fold(0.0f64, f64::max);
    let gk = build_kernel(&args.coeff, cfg, args.order.or(cfg.order), t_max)?;
    let format = args.format.or_else(|| cfg.format.clone()).unwrap_or_else(|| "csv".into());

    let mut rows = Vec::new();
    for &t in &ts {
        for &y in &ys {
            for &x in &xs {
                let kv = gk.p(x, y, t)?;
                rows.push((x, y, t, kv));
            }
        }
    }

    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    match format.as_str() {
        "csv" => {
            write!(out, "x,y,t,p,quad_err,trunc_err\n")?;
            for (x, y, t, kv) in rows {
                write!(
                    out,
                    "{},{},{},{},{},{}\n",
                    full(x),
                    full(y),
                    full(t),
                    full(kv.value),
                    full(kv.quadrature_estimate),
                    full(kv.truncation_bound)
                )?;
            }
        }
        "json" => {
            let records: Vec<serde_json::Value> = rows
                .iter()
                .map(|(x, y, t, kv)| {
                    serde_json::json!({
                        "x": x,
                        "y": y,
                        "t": t,
                        "p": kv.value,
                        "quad_err": kv.quadrature_estimate,
                        "trunc_err": kv.truncation_bound,
                    })
                })
                .collect();
            write!(out, "{}\n", serde_json::to_string_pretty(&records).expect("serializable"))?;
        }
        other => return Err(AppError::Usage(format!("unknown --format `{other}`"))),
    }
    Ok(0)
}

fn cmd_classify(args: ClassifyArgs, cfg: &ConfigFile) -> Result<i32, AppError> {
    let coeffs = build_coefficients(&args.coeff, cfg)?;
    let x0 = args.x0.or(cfg.x0).unwrap_or(1.0);
    if !(x0 > 0.0) {
        return Err(AppError::Usage("x0 must be positive".into()));
    }
    let report = boundary::classify(&coeffs, x0);
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    Ok(0)
}

fn cmd_simulate(args: SimulateArgs, cfg: &ConfigFile) -> Result<i32, AppError> {
    let x0 = require(args.x0.or(cfg.x0), "x0")?;
    let t = require(args.t.or(cfg.t), "t")?;
    let paths = require(args.paths.or(cfg.paths), "paths")?;
    if paths == 0 {
        return Err(AppError::Usage("--paths must be at least 1".into()));
    }
    let sim_cfg = SimConfig {
        dt: args.dt.or(cfg.dt).unwrap_or(1e-3),
        n_paths: paths,
        seed: args.seed.or(cfg.seed).unwrap_or(0),
        bridge_correction: args.bridge || cfg.bridge.unwrap_or(false),
        bins: args.bins.or(cfg.bins).unwrap_or(50),
        ..Default::default()
    };
    let coeffs = build_coefficients(&args.coeff, cfg)?;
    let bundle = TransformBundle::build(coeffs)?;
    let result = sde::simulate_general(&bundle, x0, t, &sim_cfg)?;
    let summary = serde_json::json!({
        "x0": x0,
        "t": t,
        "dt": sim_cfg.dt,
        "seed": sim_cfg.seed,
        "n_paths": result.n_paths,
        "survival": result.survival,
        "survival_se": result.survival_se,
        "absorbed_fraction": result.absorbed_fraction(),
        "bridge_correction": sim_cfg.bridge_correction,
        "hitting_time_sample_len": result.hitting_times.len(),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    if let Some(path) = &args.hist_out {
        let mut file = std::fs::File::create(path)?;
        write!(file, "bin_lo,bin_hi,mass,se\n")?;
        let h = &result.histogram;
        for i in 0..h.masses.len() {
            write!(
                file,
                "{},{},{},{}\n",
                full(h.edges[i]),
                full(h.edges[i + 1]),
                full(h.masses[i]),
                full(h.standard_errors[i])
            )?;
        }
    }
    Ok(0)
}

fn cmd_massloss(args: MasslossArgs, cfg: &ConfigFile) -> Result<i32, AppError> {
    let alpha = require(args.alpha.or(cfg.alpha), "alpha")?;
    let x = require(args.x.or(cfg.x), "x")?;
    let t = require(args.t.or(cfg.t), "t")?;
    let exact = closed_forms::mass_loss(alpha, x, t)?;
    let exact_log = closed_forms::mass_loss_log(alpha, x, t)?;
    let big_t = x.powf(2.0 - alpha) / ((2.0 - alpha).powi(2) * t);
    println!("mass_loss           = {}", full(exact));
    println!("ln_mass_loss        = {}", full(exact_log));
    println!("neg_log_ratio       = {}", full(-exact_log / big_t));
    if args.asymptotic {
        let asym = closed_forms::mass_loss_asymptotic(alpha, x, t)?;
        let asym_log = closed_forms::mass_loss_asymptotic_log(alpha, x, t)?;
        println!("asymptotic          = {}", full(asym));
        println!("exact_over_asymptotic = {}", full((exact_log - asym_log).exp()));
    }
    Ok(0)
}

fn cmd_selftest(args: SelftestArgs, cfg: &ConfigFile) -> Result<i32, AppError> {
    let filter = args.filter.or_else(|| cfg.filter.clone());
    let results = selftest::run(filter.as_deref());
    if results.is_empty() {
        return Err(AppError::Usage(format!(
            "filter `{}` matched no criteria",
            filter.unwrap_or_default()
        )));
    }
    let all_pass = results.iter().all(|r| r.pass);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&results).expect("serializable"));
    } else {
        for r in &results {
            println!("{}", r.line());
        }
        println!(
            "{}: {} of {} criteria passed",
            if all_pass { "OK" } else { "FAILED" },
            results.iter().filter(|r| r.pass).count(),
            results.len()
        );
    }
    Ok(if all_pass { 0 } else { 2 })
}
