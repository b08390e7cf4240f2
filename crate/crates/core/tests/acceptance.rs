//! Acceptance checks, one line per criterion.
//!
//! Run with `cargo test --test acceptance`. Exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use advland::activation::Activation;
use advland::attack::{universal_flip_eta, DEFAULT_ETA_MAX, DEFAULT_GRID};
use advland::bounds::BoundKind;
use advland::experiments::{run_bound_suite, run_sweep, to_csv_string, SweepConfig};
use advland::landscape::{
    check_gradient_descent_lemma, estimate_hessian_opnorm, estimate_hessian_opnorm_stats, sample_points,
};
use advland::linalg::norm;
use advland::network::{sample_input, Network};
use advland::rng::{self, derive_seed};
use advland::stats::Moments;
use advland::trials::TrialDesign;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

const SATURATION_MIN_FRACTION: f64 = 0.99;
const GRAD_NORM_MEAN_RANGE: (f64, f64) = (0.68, 0.74);
const VALUE_VARIANCE_RANGE: (f64, f64) = (0.45, 0.55);
const HESSIAN_RATIO_RANGE: (f64, f64) = (1.6, 2.6);
const HESSIAN_DENSE_REL_TOL: f64 = 1e-3;
const BOUND_GAMMAS: [f64; 2] = [0.05, 0.2];
const BOUND_TRIALS: usize = 10_000;
const BOUND_SIZE: usize = 1000;
const LEMMA_CASES: usize = 1000;
const LEMMA_ETA_RANGE: f64 = 3.0;
const FLAT_ETA_MAX_RATIO: f64 = 1.5;
const FLAT_GRAD_MAX_RATIO: f64 = 1.2;
const UNIVERSAL_MIN_FRACTION: f64 = 0.90;
const GRADIENT_FD_REL_TOL: f64 = 1e-5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn saturation() -> Outcome {
    let cfg = SweepConfig {
        nets_per_cell: 100,
        inputs_per_net: 100,
        seed: 1,
        ..SweepConfig::new(vec![500], vec![500], vec![1], Activation::Relu)
    };
    let r = &run_sweep(&cfg).expect("sweep")[0];
    outcome(
        r.fraction_flipped >= SATURATION_MIN_FRACTION,
        format!(
            "fraction_flipped = {} over {} trials (need ≥ {SATURATION_MIN_FRACTION})",
            r.fraction_flipped, r.n_total
        ),
    )
}

fn point_scale() -> (Outcome, Outcome) {
    let design = TrialDesign::independent(1000, 1000, Activation::Relu).with_inputs_per_net(100);
    let pts = sample_points(&design, 10_000, 2).expect("samples");
    let grads: Vec<f64> = pts.iter().map(|p| p.grad_norm).collect();
    let values: Vec<f64> = pts.iter().map(|p| p.value).collect();
    let g = Moments::from_slice(&grads).mean();
    let v = Moments::from_slice(&values).variance();
    let (glo, ghi) = GRAD_NORM_MEAN_RANGE;
    let (vlo, vhi) = VALUE_VARIANCE_RANGE;
    (
        outcome(
            (glo..=ghi).contains(&g),
            format!("mean ‖∇f‖ = {g:.5} (need [{glo}, {ghi}])"),
        ),
        outcome(
            (vlo..=vhi).contains(&v),
            format!("Var f = {v:.5} (need [{vlo}, {vhi}])"),
        ),
    )
}

fn hessian_decay() -> Outcome {
    let median = |d: usize, seed: u64| {
        let design = TrialDesign::independent(d, 2000, Activation::Tanh);
        estimate_hessian_opnorm_stats(&design, 200, 100, seed)
            .expect("hessian")
            .median()
    };
    let (small, large) = (median(256, 3), median(1024, 4));
    let ratio = small / large;

    let mut worst = 0.0f64;
    for case in 0..20u64 {
        let d = 10 + (case as usize * 2);
        let net = Network::sample(1, d, 40, Activation::Tanh, derive_seed(5, &[case])).expect("net");
        let x = sample_input(d, derive_seed(6, &[case])).expect("x");
        let h = net.hessian_at(&x).expect("hessian").to_dense();
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, h.as_slice())).eigenvalues;
        let exact = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let est = estimate_hessian_opnorm(&net, &x, 5000).expect("power");
        worst = worst.max((est - exact).abs() / exact);
    }
    let (lo, hi) = HESSIAN_RATIO_RANGE;
    outcome(
        (lo..=hi).contains(&ratio) && worst <= HESSIAN_DENSE_REL_TOL,
        format!(
            "median ratio d=256/d=1024 = {ratio:.4} (need [{lo}, {hi}]); worst dense-oracle rel err = {worst:.2e} (need ≤ {HESSIAN_DENSE_REL_TOL})"
        ),
    )
}

fn bound_suite() -> Outcome {
    let kinds = [
        BoundKind::Value(Activation::Relu),
        BoundKind::Value(Activation::Tanh),
        BoundKind::GradLower(Activation::Relu),
        BoundKind::GradLower(Activation::Tanh),
        BoundKind::ChiSquared,
        BoundKind::PerSampleGradDev(Activation::Tanh),
        BoundKind::PerSampleGradDev(Activation::Relu),
        BoundKind::FlipSingle,
    ];
    let reports = run_bound_suite(&kinds, &BOUND_GAMMAS, &[BOUND_SIZE], BOUND_TRIALS, 7, None).expect("suite");
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{}@γ={} rate={}", r.name, r.params["gamma"], r.empirical_exceed_rate))
        .collect();
    let worst = reports
        .iter()
        .map(|r| r.empirical_exceed_rate - r.params["gamma"])
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        failed.is_empty(),
        format!(
            "{} reports, largest rate − γ = {worst:+.4}; failures: {failed:?}",
            reports.len()
        ),
    )
}

fn gradient_step_check() -> Outcome {
    let design = TrialDesign::independent(500, 500, Activation::Tanh).with_inputs_per_net(10);
    let checks = design
        .run(LEMMA_CASES, 8, |net, x, t| {
            let mut r = rng::stream(8, &[t as u64]);
            let eta = r.random_range(-LEMMA_ETA_RANGE..=LEMMA_ETA_RANGE);
            check_gradient_descent_lemma(net, x, eta)
        })
        .expect("step check");
    let held = checks.iter().filter(|c| c.holds()).count();
    outcome(
        held == checks.len(),
        format!("{held}/{} cases with lhs ≤ rhs", checks.len()),
    )
}

fn flatness() -> Outcome {
    let cfg = SweepConfig {
        nets_per_cell: 10,
        inputs_per_net: 100,
        seed: 9,
        ..SweepConfig::new(vec![100, 300, 1000], vec![1000], vec![1], Activation::Relu)
    };
    let res = run_sweep(&cfg).expect("sweep");
    let spread = |xs: Vec<f64>| {
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    };
    let eta = spread(res.iter().map(|r| r.mean_smallest_eta.unwrap_or(f64::NAN)).collect());
    let grad = spread(res.iter().map(|r| r.mean_grad_norm).collect());
    outcome(
        eta <= FLAT_ETA_MAX_RATIO && grad <= FLAT_GRAD_MAX_RATIO,
        format!("max/min mean |η| = {eta:.4} (need ≤ {FLAT_ETA_MAX_RATIO}); max/min mean ‖∇f‖ = {grad:.4} (need ≤ {FLAT_GRAD_MAX_RATIO})"),
    )
}

fn universal() -> Outcome {
    let design = TrialDesign::independent(500, 500, Activation::Relu).with_inputs_per_net(10);
    let hits = design
        .run(1000, 10, |net, x, _| {
            Ok(universal_flip_eta(net, x, DEFAULT_ETA_MAX, DEFAULT_GRID)?.is_some())
        })
        .expect("universal");
    let frac = hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64;
    outcome(
        frac >= UNIVERSAL_MIN_FRACTION,
        format!("flip fraction = {frac} (need ≥ {UNIVERSAL_MIN_FRACTION})"),
    )
}

/// Worst relative central-difference error over `cases` networks of the given
/// activation; ReLU cases keep every pre-activation at least `margin` from 0.
fn fd_worst(activation: Activation, cases: usize, seed: u64) -> f64 {
    let (h, margin) = (1e-6, 1e-3);
    let mut worst = 0.0f64;
    let mut done = 0;
    let mut attempt = 0u64;
    while done < cases {
        attempt += 1;
        let mut r = rng::stream(seed, &[attempt]);
        let depth = r.random_range(1..=3);
        let d = r.random_range(5..=40);
        let k = r.random_range(5..=60);
        let net = Network::sample(depth, d, k, activation, derive_seed(seed, &[attempt, 1])).expect("net");
        let x = sample_input(d, derive_seed(seed, &[attempt, 2])).expect("x");
        if activation == Activation::Relu && !clear_of_kinks(&net, &x, margin) {
            continue;
        }
        let g = net.gradient(&x).expect("grad");
        let fd: Vec<f64> = (0..d)
            .map(|i| {
                let (mut p, mut m) = (x.to_vec(), x.to_vec());
                p[i] += h;
                m[i] -= h;
                (net.forward(&p).unwrap() - net.forward(&m).unwrap()) / (2.0 * h)
            })
            .collect();
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let gn = norm(&g);
        if gn > 0.0 {
            worst = worst.max(norm(&diff) / gn);
            done += 1;
        }
    }
    worst
}

fn clear_of_kinks(net: &Network, x: &[f64], margin: f64) -> bool {
    let mut h = x.to_vec();
    for w in net.layers() {
        let z = w.matvec(&h);
        if z.iter().any(|v| v.abs() < margin) {
            return false;
        }
        h = z.iter().map(|&v| v.max(0.0)).collect();
    }
    true
}

fn gradient_fd() -> Outcome {
    let smooth = fd_worst(Activation::Tanh, 100, 11);
    let relu = fd_worst(Activation::Relu, 100, 12);
    outcome(
        smooth <= GRADIENT_FD_REL_TOL && relu <= GRADIENT_FD_REL_TOL,
        format!("worst rel err tanh = {smooth:.2e}, relu = {relu:.2e} (need ≤ {GRADIENT_FD_REL_TOL})"),
    )
}

fn determinism() -> Outcome {
    let cfg = SweepConfig {
        nets_per_cell: 5,
        inputs_per_net: 10,
        seed: 13,
        ..SweepConfig::new(vec![50, 120], vec![80], vec![1, 2], Activation::Relu)
    };
    let a = to_csv_string(&run_sweep(&cfg).expect("sweep")).expect("csv");
    let b = to_csv_string(&run_sweep(&cfg).expect("sweep")).expect("csv");
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().expect("pool");
    let c = pool.install(|| to_csv_string(&run_sweep(&cfg).expect("sweep")).expect("csv"));
    outcome(
        a == b && a == c,
        format!(
            "{} CSV bytes, identical across runs and pools: {}",
            a.len(),
            a == b && a == c
        ),
    )
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |name: &str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        all &= o.pass;
        println!(
            "{} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    };
    report("saturation", &saturation);
    let scale = std::cell::OnceCell::new();
    let scale_pair = || scale.get_or_init(point_scale);
    report("gradient_norm_scale", &|| {
        outcome(scale_pair().0.pass, scale_pair().0.detail.clone())
    });
    report("value_scale", &|| {
        outcome(scale_pair().1.pass, scale_pair().1.detail.clone())
    });
    report("hessian_decay", &hessian_decay);
    report("bound_exceedance_suite", &bound_suite);
    report("gradient_step_inequality", &gradient_step_check);
    report("flatness", &flatness);
    report("universal_perturbation", &universal);
    report("gradient_correctness", &gradient_fd);
    report("determinism", &determinism);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
