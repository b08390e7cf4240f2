//! Seeded `(d, k, L)` sweeps of the smallest flipping step and the bound suite.
//!
//! Every network and input seed is derived from the root seed and the cell and
//! trial indices, and results are assembled in `(d, k, L)` order, so output
//! bytes do not depend on the thread count.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::attack::{search_flip_along, DEFAULT_ETA_MAX, DEFAULT_GRID, MIN_GRADIENT_NORM};
use crate::bounds::{verify_bound_gammas, BoundKind, BoundParams, BoundReport};
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::network::{sample_input, Network};
use crate::rng::{derive_seed, tag};
use crate::stats::Moments;

/// Largest hidden width a sweep accepts.
pub const MAX_WIDTH: usize = 100_000;
/// Largest number of weights (`d·k + (L−1)·k²`) a single network may hold.
pub const MAX_PARAMS: f64 = 1e8;

pub const CSV_HEADER: &str =
    "d,k,L,n_total,n_flipped,fraction_flipped,mean_smallest_eta,std_smallest_eta,mean_grad_norm,std_grad_norm";

fn default_eta_max() -> f64 {
    DEFAULT_ETA_MAX
}

fn default_grid() -> usize {
    DEFAULT_GRID
}

fn default_count() -> usize {
    100
}

/// Sweep description, loadable from a flat TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub d_values: Vec<usize>,
    pub k_values: Vec<usize>,
    #[serde(rename = "L_values")]
    pub l_values: Vec<usize>,
    pub activation: Activation,
    #[serde(default = "default_count")]
    pub nets_per_cell: usize,
    #[serde(default = "default_count")]
    pub inputs_per_net: usize,
    #[serde(default = "default_eta_max")]
    pub eta_max: f64,
    /// Grid points of the step-size search before bisection.
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

impl SweepConfig {
    /// Single-layer ReLU sweep over the given grid with the default budget.
    pub fn new(d_values: Vec<usize>, k_values: Vec<usize>, l_values: Vec<usize>, activation: Activation) -> Self {
        Self {
            d_values,
            k_values,
            l_values,
            activation,
            nets_per_cell: default_count(),
            inputs_per_net: default_count(),
            eta_max: DEFAULT_ETA_MAX,
            grid: DEFAULT_GRID,
            seed: 0,
            output_path: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, list) in [
            ("d_values", &self.d_values),
            ("k_values", &self.k_values),
            ("L_values", &self.l_values),
        ] {
            if list.is_empty() {
                return Err(Error::Config(format!("{name} must not be empty")));
            }
            if list.contains(&0) {
                return Err(Error::Config(format!("{name} must contain positive integers only")));
            }
        }
        if self.nets_per_cell == 0 || self.inputs_per_net == 0 {
            return Err(Error::Config(
                "nets_per_cell and inputs_per_net must be at least 1".into(),
            ));
        }
        if !(self.eta_max.is_finite() && self.eta_max > 0.0) {
            return Err(Error::Config(format!("eta_max must be positive, got {}", self.eta_max)));
        }
        if self.grid < 2 {
            return Err(Error::Config(format!("grid must be at least 2, got {}", self.grid)));
        }
        if let Some(&k) = self.k_values.iter().find(|&&k| k > MAX_WIDTH) {
            return Err(Error::Config(format!("k = {k} exceeds the width cap {MAX_WIDTH}")));
        }
        for &(d, k, l) in &self.cells() {
            let params = (d * k) as f64 + (l - 1) as f64 * (k as f64).powi(2);
            if params > MAX_PARAMS {
                return Err(Error::Config(format!(
                    "cell (d={d}, k={k}, L={l}) needs {params:.3e} weights, cap is {MAX_PARAMS:.0e}"
                )));
            }
        }
        Ok(())
    }

    /// Distinct `(d, k, L)` cells in ascending order.
    pub fn cells(&self) -> Vec<(usize, usize, usize)> {
        let mut cells: Vec<_> = self
            .d_values
            .iter()
            .flat_map(|&d| {
                self.k_values
                    .iter()
                    .flat_map(move |&k| self.l_values.iter().map(move |&l| (d, k, l)))
            })
            .collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }
}

/// Per-cell statistics. Step statistics cover flipped inputs only and are
/// `None` when nothing flipped; standard deviations are population values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub d: usize,
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub n_total: usize,
    pub n_flipped: usize,
    pub fraction_flipped: f64,
    pub mean_smallest_eta: Option<f64>,
    pub std_smallest_eta: Option<f64>,
    pub mean_grad_norm: f64,
    pub std_grad_norm: f64,
}

struct InputRecord {
    grad_norm: f64,
    eta: Option<f64>,
}

fn evaluate_input(net: &Network, x: &[f64], eta_max: f64, grid: usize) -> Result<InputRecord> {
    let (value, grad) = net.value_and_gradient(x)?;
    let grad_norm = norm(&grad);
    // A vanishing gradient leaves the step undefined: counted, never flipped.
    if grad_norm.is_nan() || grad_norm < MIN_GRADIENT_NORM {
        return Ok(InputRecord { grad_norm, eta: None });
    }
    let eta = search_flip_along(net, x, &grad, value, eta_max, grid)?;
    Ok(InputRecord {
        grad_norm,
        eta: eta.map(f64::abs),
    })
}

fn run_cell(cfg: &SweepConfig, (d, k, l): (usize, usize, usize)) -> Result<SweepResult> {
    let cell_path = [tag::SWEEP, d as u64, k as u64, l as u64];
    let per_net: Vec<Result<Vec<InputRecord>>> = (0..cfg.nets_per_cell)
        .into_par_iter()
        .map(|n| {
            let net_seed = derive_seed(
                cfg.seed,
                &[cell_path[0], cell_path[1], cell_path[2], cell_path[3], n as u64],
            );
            let net = Network::sample(l, d, k, cfg.activation, net_seed)?;
            (0..cfg.inputs_per_net)
                .map(|i| {
                    let x = sample_input(d, derive_seed(net_seed, &[tag::INPUT, i as u64]))?;
                    evaluate_input(&net, &x, cfg.eta_max, cfg.grid)
                })
                .collect()
        })
        .collect();
    let mut records = Vec::with_capacity(cfg.nets_per_cell * cfg.inputs_per_net);
    for r in per_net {
        records.extend(r?);
    }
    let grads: Vec<f64> = records.iter().map(|r| r.grad_norm).collect();
    let etas: Vec<f64> = records.iter().filter_map(|r| r.eta).collect();
    let g = Moments::from_slice(&grads);
    let e = (!etas.is_empty()).then(|| Moments::from_slice(&etas));
    Ok(SweepResult {
        d,
        k,
        l,
        n_total: records.len(),
        n_flipped: etas.len(),
        fraction_flipped: etas.len() as f64 / records.len() as f64,
        mean_smallest_eta: e.map(|m| m.mean()),
        std_smallest_eta: e.map(|m| m.std()),
        mean_grad_norm: g.mean(),
        std_grad_norm: g.std(),
    })
}

/// Runs every cell of `config` and returns results in `(d, k, L)` order.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepResult>> {
    config.validate()?;
    config.cells().into_iter().map(|cell| run_cell(config, cell)).collect()
}

/// Decimal rendering rounded to 9 significant digits.
fn fmt_sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("re-parse of formatted float");
    format!("{rounded}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_sig9).unwrap_or_default()
}

/// Renders results as CSV text (header plus one row per cell).
pub fn to_csv_string(results: &[SweepResult]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for r in results {
        w.write_record([
            r.d.to_string(),
            r.k.to_string(),
            r.l.to_string(),
            r.n_total.to_string(),
            r.n_flipped.to_string(),
            fmt_sig9(r.fraction_flipped),
            fmt_opt(r.mean_smallest_eta),
            fmt_opt(r.std_smallest_eta),
            fmt_sig9(r.mean_grad_norm),
            fmt_sig9(r.std_grad_norm),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse(format!("{other:?}")),
        }
    } else {
        Error::Parse(e.to_string())
    }
}

/// Writes the CSV for `results` to `path`.
pub fn emit_csv(results: &[SweepResult], path: &Path) -> Result<()> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("no sweep results to write".into()));
    }
    fs::write(path, to_csv_string(results)?)?;
    Ok(())
}

/// Parses CSV produced by [`to_csv_string`].
pub fn parse_csv(text: &str) -> Result<Vec<SweepResult>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected header `{header}`")));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Writes one JSON document per line.
pub fn write_json_lines<T: Serialize, W: Write>(items: &[T], mut out: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| Error::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a comma-separated or listed set of bound names.
pub fn parse_bound_list<S: AsRef<str>>(names: &[S]) -> Result<Vec<BoundKind>> {
    names.iter().map(|n| n.as_ref().trim().parse()).collect()
}

/// Verifies every bound in `kinds` at every size and γ.
///
/// Each `(bound, size)` pair draws one sample shared by all γ. Reports are
/// ordered by bound, then size, then γ, and written as JSON lines to `path`
/// when given.
pub fn run_bound_suite(
    kinds: &[BoundKind],
    gammas: &[f64],
    sizes: &[usize],
    trials: usize,
    seed: u64,
    path: Option<&Path>,
) -> Result<Vec<BoundReport>> {
    if trials == 0 {
        return Err(Error::InvalidTrials);
    }
    let mut reports = Vec::new();
    for &kind in kinds {
        for &size in sizes {
            let params = BoundParams::for_size(kind, size);
            reports.extend(verify_bound_gammas(
                kind,
                &params,
                gammas,
                trials,
                derive_seed(seed, &[size as u64]),
            )?);
        }
    }
    if let Some(path) = path {
        write_json_lines(&reports, std::io::BufWriter::new(fs::File::create(path)?))?;
    }
    Ok(reports)
}

/// [`run_bound_suite`] over [`BoundKind::DEFAULT_SUITE`].
pub fn run_default_bound_suite(
    gammas: &[f64],
    sizes: &[usize],
    trials: usize,
    seed: u64,
    path: Option<&Path>,
) -> Result<Vec<BoundReport>> {
    run_bound_suite(&BoundKind::DEFAULT_SUITE, gammas, sizes, trials, seed, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SweepConfig {
        SweepConfig {
            nets_per_cell: 3,
            inputs_per_net: 4,
            seed: 9,
            ..SweepConfig::new(vec![30, 10], vec![40], vec![1, 2], Activation::Relu)
        }
    }

    #[test]
    fn cells_sorted_and_deduplicated() {
        let cfg = SweepConfig::new(vec![300, 100, 100], vec![50], vec![2, 1], Activation::Relu);
        assert_eq!(
            cfg.cells(),
            vec![(100, 50, 1), (100, 50, 2), (300, 50, 1), (300, 50, 2)]
        );
    }

    #[test]
    fn config_from_toml() {
        let cfg = SweepConfig::from_toml_str(
            "d_values = [100]\nk_values = [100, 200]\nL_values = [1]\nactivation = \"tanh\"\nnets_per_cell = 10\ninputs_per_net = 10\nseed = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.activation, Activation::Tanh);
        assert_eq!(cfg.eta_max, 20.0);
        assert_eq!(cfg.grid, 400);
        assert_eq!(cfg.seed, 5);
        assert!(matches!(
            SweepConfig::from_toml_str("d_values = [1]\nbogus = 3"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            SweepConfig::from_toml_str("d_values = []\nk_values = [1]\nL_values = [1]\nactivation = \"relu\""),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn budget_enforced() {
        let wide = SweepConfig::new(vec![10], vec![MAX_WIDTH + 1], vec![1], Activation::Relu);
        assert!(matches!(wide.validate(), Err(Error::Config(m)) if m.contains("width")));
        let deep = SweepConfig::new(vec![10], vec![20_000], vec![2], Activation::Relu);
        assert!(matches!(deep.validate(), Err(Error::Config(m)) if m.contains("weights")));
    }

    #[test]
    fn sweep_shapes_and_invariants() {
        let res = run_sweep(&tiny()).unwrap();
        assert_eq!(res.len(), 4);
        for r in &res {
            assert_eq!(r.n_total, 12);
            assert!(r.n_flipped <= r.n_total);
            assert_eq!(r.fraction_flipped, r.n_flipped as f64 / 12.0);
            assert_eq!(r.mean_smallest_eta.is_some(), r.n_flipped > 0);
            if let Some(m) = r.mean_smallest_eta {
                assert!(m > 0.0 && m <= 20.0);
            }
        }
    }

    #[test]
    fn sweep_is_deterministic_across_pools() {
        let a = to_csv_string(&run_sweep(&tiny()).unwrap()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| to_csv_string(&run_sweep(&tiny()).unwrap()).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn csv_layout() {
        let r = SweepResult {
            d: 5,
            k: 7,
            l: 1,
            n_total: 10,
            n_flipped: 0,
            fraction_flipped: 0.0,
            mean_smallest_eta: None,
            std_smallest_eta: None,
            mean_grad_norm: std::f64::consts::FRAC_1_SQRT_2,
            std_grad_norm: 1.0 / 3.0,
        };
        let text = to_csv_string(std::slice::from_ref(&r)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(text.ends_with('\n'));
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "5,7,1,10,0,0,,,0.707106781,0.333333333");
        let back = parse_csv(&text).unwrap();
        assert_eq!(back[0].mean_smallest_eta, None);
        assert!((back[0].mean_grad_norm - r.mean_grad_norm).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let res = run_sweep(&tiny()).unwrap();
        let back = parse_csv(&to_csv_string(&res).unwrap()).unwrap();
        assert_eq!(back.len(), res.len());
        // Nine significant digits leave at most half a unit in the ninth digit.
        let close = |a: f64, b: f64| (a - b).abs() <= 5e-9 * a.abs();
        for (a, b) in res.iter().zip(&back) {
            assert_eq!(
                (a.d, a.k, a.l, a.n_total, a.n_flipped),
                (b.d, b.k, b.l, b.n_total, b.n_flipped)
            );
            assert!(close(a.fraction_flipped, b.fraction_flipped));
            assert!(close(a.mean_grad_norm, b.mean_grad_norm));
            assert!(close(a.std_grad_norm, b.std_grad_norm));
            match (a.mean_smallest_eta, b.mean_smallest_eta) {
                (Some(x), Some(y)) => assert!(close(x, y)),
                (None, None) => {}
                other => panic!("{other:?}"),
            }
        }
        assert!(matches!(parse_csv("a,b\n1,2\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn emit_rejects_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_csv(&[], &dir.path().join("x.csv")).is_err());
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(1234567891234.0), "1234567890000");
        assert_eq!(fmt_sig9(0.000123456789123), "0.000123456789");
    }

    #[test]
    fn bound_suite_writes_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.jsonl");
        let kinds = parse_bound_list(&["chisq", "value_relu"]).unwrap();
        let reps = run_bound_suite(&kinds, &[0.05, 0.2], &[50], 10, 1, Some(&path)).unwrap();
        assert_eq!(reps.len(), 4);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(matches!(
            parse_bound_list(&["chisq", "nope"]),
            Err(Error::UnknownBound(_))
        ));
    }
}
