//! The `advland` command line.
//!
//! JSON results go to stdout (or `--out`), diagnostics to stderr. Exit status
//! is 0 on success, 1 on a runtime error and 2 on a usage error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::activation::Activation;
use crate::attack::{
    multi_step_attack, single_step_attack, smallest_flip_eta, universal_direction, universal_flip_eta, AttackOutcome,
    DEFAULT_ETA_MAX, DEFAULT_GRID,
};
use crate::bounds::BoundKind;
use crate::error::{Error, Result};
use crate::experiments::{emit_csv, parse_bound_list, run_bound_suite, run_sweep, write_json_lines, SweepConfig};
use crate::landscape::{
    estimate_grad_deviation_sup, estimate_gradient_norm_with, estimate_hessian_opnorm_stats, estimate_value_stats_with,
    flip_fraction, LandscapeStats, Quantity,
};
use crate::linalg::norm;
use crate::network::{point_along, sample_input, Network};
use crate::rng::{self, derive_seed, tag};
use crate::trials::TrialDesign;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "ADVLAND_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ActivationArg {
    Relu,
    Tanh,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Tanh => Activation::Tanh,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum QuantityArg {
    ValueAbs,
    GradNorm,
    HessianOpnorm,
    GradDeviationSup,
    FlipFraction,
}

impl From<QuantityArg> for Quantity {
    fn from(q: QuantityArg) -> Self {
        match q {
            QuantityArg::ValueAbs => Quantity::ValueAbs,
            QuantityArg::GradNorm => Quantity::GradNorm,
            QuantityArg::HessianOpnorm => Quantity::HessianOpnorm,
            QuantityArg::GradDeviationSup => Quantity::GradDeviationSup,
            QuantityArg::FlipFraction => Quantity::FlipFraction,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    /// One step of magnitude --eta.
    Single,
    /// Smallest flipping |η| ≤ --eta-max along the gradient.
    Search,
    /// Smallest flipping |η| ≤ --eta-max along the universal direction.
    Universal,
    /// Normalised steps of length --step-size until the sign flips.
    Multi,
}

/// Single-step gradient attacks and landscape statistics for random networks.
#[derive(Debug, Parser)]
#[command(name = "advland", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Attack one sampled (network, input) pair and print the outcome as JSON.
    Attack(AttackArgs),
    /// Estimate a landscape statistic over sampled (network, input) pairs.
    Landscape(LandscapeArgs),
    /// Run a (d, k, L) sweep and write CSV.
    Sweep(SweepArgs),
    /// Check concentration bounds by Monte-Carlo and write JSON lines.
    VerifyBounds(VerifyArgs),
}

#[derive(Debug, Args)]
struct NetArgs {
    /// Input dimension d.
    #[arg(long, default_value_t = 500)]
    d: usize,
    /// Hidden width k.
    #[arg(long, default_value_t = 500)]
    k: usize,
    /// Number of hidden layers L.
    #[arg(long, default_value_t = 1)]
    depth: usize,
    /// Activation function.
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    activation: ActivationArg,
    /// Root random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Step magnitude |η|; implies --method single when no method is given.
    #[arg(long)]
    eta: Option<f64>,
    /// Attack variant (default: single with --eta, search otherwise).
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Largest |η| searched.
    #[arg(long, default_value_t = DEFAULT_ETA_MAX)]
    eta_max: f64,
    /// Grid points scanned before bisection.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    /// Step length for --method multi.
    #[arg(long, default_value_t = 0.5)]
    step_size: f64,
    /// Step budget for --method multi.
    #[arg(long, default_value_t = 100)]
    max_steps: usize,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LandscapeArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Statistic to estimate.
    #[arg(long, value_enum)]
    quantity: QuantityArg,
    /// Number of (network, input) samples.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Inputs evaluated per sampled network.
    #[arg(long, default_value_t = 1)]
    inputs_per_net: usize,
    /// Perturbation radius R (grad_deviation_sup, flip_fraction).
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Power-iteration budget (hessian_opnorm, at least 50).
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    /// Random probe directions (grad_deviation_sup).
    #[arg(long, default_value_t = 8)]
    probe_dirs: usize,
    /// Probe radii per direction (grad_deviation_sup).
    #[arg(long, default_value_t = 4)]
    probe_radii: usize,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// TOML sweep description; flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dimensions, comma separated.
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<usize>>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Depths L, comma separated.
    #[arg(long, value_delimiter = ',')]
    depth: Option<Vec<usize>>,
    /// Activation function.
    #[arg(long, value_enum)]
    activation: Option<ActivationArg>,
    /// Networks sampled per cell.
    #[arg(long)]
    nets_per_cell: Option<usize>,
    /// Inputs per network.
    #[arg(long)]
    inputs_per_net: Option<usize>,
    /// Total trials per cell; sets nets per cell to ⌈trials / inputs-per-net⌉.
    #[arg(long)]
    trials: Option<usize>,
    /// Largest |η| searched.
    #[arg(long)]
    eta_max: Option<f64>,
    /// Root random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination (stdout when neither this nor the config names one).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Bound names, comma separated (default: the standard suite).
    #[arg(long, value_delimiter = ',')]
    bounds: Option<Vec<String>>,
    /// Confidence parameters γ, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.05, 0.2])]
    gammas: Vec<f64>,
    /// Nominal sizes d = k, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1000usize])]
    sizes: Vec<usize>,
    /// Samples per bound and size.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Root random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON-lines destination instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // Fails only if a global pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string(value).map_err(|e| Error::Io(e.into()))?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn build_network(a: &NetArgs) -> Result<Network> {
    Network::sample(a.depth, a.d, a.k, a.activation.into(), a.seed)
}

fn outcome_at(net: &Network, x: &[f64], dir: &[f64], eta: f64, before: f64) -> Result<AttackOutcome> {
    let after = net.forward(&point_along(x, dir, eta))?;
    Ok(AttackOutcome {
        eta,
        perturbation_norm: eta.abs() * norm(dir),
        value_before: before,
        value_after: after,
        flipped: crate::attack::sign_changed(before, after),
    })
}

fn cmd_attack(a: &AttackArgs) -> Result<()> {
    let method = a.method.unwrap_or(if a.eta.is_some() {
        Method::Single
    } else {
        Method::Search
    });
    let net = build_network(&a.net)?;
    let x = sample_input(a.net.d, a.net.seed)?;
    let out = a.out.as_deref();
    match method {
        Method::Single => {
            let eta = a
                .eta
                .ok_or_else(|| Error::InvalidArgument("--method single needs --eta".into()))?;
            write_json(&single_step_attack(&net, &x, eta)?, out)
        }
        Method::Search => {
            let (before, grad) = net.value_and_gradient(&x)?;
            let eta = smallest_flip_eta(&net, &x, a.eta_max, a.grid)?;
            let eta = eta.unwrap_or(-crate::attack::sign(before) * a.eta_max);
            write_json(&outcome_at(&net, &x, &grad, eta, before)?, out)
        }
        Method::Universal => {
            let before = net.forward(&x)?;
            let u = universal_direction(&net)?;
            let eta = universal_flip_eta(&net, &x, a.eta_max, a.grid)?;
            let eta = eta.unwrap_or(-crate::attack::sign(before) * a.eta_max);
            write_json(&outcome_at(&net, &x, &u, eta, before)?, out)
        }
        Method::Multi => write_json(&multi_step_attack(&net, &x, a.step_size, a.max_steps)?, out),
    }
}

fn cmd_landscape(a: &LandscapeArgs) -> Result<()> {
    let n = &a.net;
    let design = TrialDesign::independent(n.d, n.k, n.activation.into())
        .with_depth(n.depth)
        .with_inputs_per_net(a.inputs_per_net);
    let (trials, seed, radius) = (a.trials, n.seed, a.radius);
    let quantity: Quantity = a.quantity.into();
    let stats = match quantity {
        Quantity::ValueAbs => estimate_value_stats_with(&design, trials, seed)?,
        Quantity::GradNorm => estimate_gradient_norm_with(&design, trials, seed)?,
        Quantity::HessianOpnorm => estimate_hessian_opnorm_stats(&design, a.iterations, trials, seed)?,
        Quantity::GradDeviationSup => {
            let v = design.run(trials, seed, |net, x, t| {
                let probe = derive_seed(seed, &[tag::PROBE, t as u64]);
                estimate_grad_deviation_sup(net, x, radius, a.probe_dirs, a.probe_radii, probe)
            })?;
            LandscapeStats::from_samples(quantity, n.d, n.k, Some(radius), v)?
        }
        Quantity::FlipFraction => {
            let v = design.run(trials, seed, |net, x, t| {
                let mut r = rng::stream(seed, &[tag::PROBE, t as u64]);
                let delta: Vec<f64> = rng::unit_vector(&mut r, n.d).into_iter().map(|c| c * radius).collect();
                flip_fraction(net, x, &delta)
            })?;
            LandscapeStats::from_samples(quantity, n.d, n.k, Some(radius), v)?
        }
    };
    write_json(&stats, a.out.as_deref())
}

fn sweep_config(a: &SweepArgs) -> Result<SweepConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            toml::from_str::<SweepConfig>(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => {
            let missing = |flag: &str| Error::Config(format!("{flag} is required without --config"));
            SweepConfig::new(
                a.d.clone().ok_or_else(|| missing("--d"))?,
                a.k.clone().ok_or_else(|| missing("--k"))?,
                a.depth.clone().unwrap_or_else(|| vec![1]),
                a.activation.map(Activation::from).unwrap_or(Activation::Relu),
            )
        }
    };
    if let Some(v) = &a.d {
        cfg.d_values = v.clone();
    }
    if let Some(v) = &a.k {
        cfg.k_values = v.clone();
    }
    if let Some(v) = &a.depth {
        cfg.l_values = v.clone();
    }
    if let Some(act) = a.activation {
        cfg.activation = act.into();
    }
    if let Some(n) = a.nets_per_cell {
        cfg.nets_per_cell = n;
    }
    if let Some(n) = a.inputs_per_net {
        cfg.inputs_per_net = n;
    }
    if let Some(t) = a.trials {
        cfg.nets_per_cell = t.div_ceil(cfg.inputs_per_net.max(1));
    }
    if let Some(e) = a.eta_max {
        cfg.eta_max = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.out.is_some() {
        cfg.output_path = a.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let cfg = sweep_config(a)?;
    let results = run_sweep(&cfg)?;
    match &cfg.output_path {
        Some(path) => {
            emit_csv(&results, path)?;
            eprintln!("wrote {} cells to {}", results.len(), path.display());
        }
        None => io::stdout()
            .lock()
            .write_all(crate::experiments::to_csv_string(&results)?.as_bytes())?,
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> Result<()> {
    let kinds = match &a.bounds {
        Some(names) => parse_bound_list(names)?,
        None => BoundKind::DEFAULT_SUITE.to_vec(),
    };
    let reports = run_bound_suite(&kinds, &a.gammas, &a.sizes, a.trials, a.seed, a.out.as_deref())?;
    if a.out.is_none() {
        write_json_lines(&reports, BufWriter::new(io::stdout().lock()))?;
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    eprintln!("{} reports, {failed} failed", reports.len());
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            // Printing can only fail on a closed stream; the exit code still reports the outcome.
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    let result = match &cli.command {
        Command::Attack(a) => cmd_attack(a),
        Command::Landscape(a) => cmd_landscape(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::VerifyBounds(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
