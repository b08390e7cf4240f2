//! Monte-Carlo exceedance checks for the closed-form bounds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    bernstein_bound, chisq_deviation_bound, flip_prob_ball, flip_prob_single, grad_dev_bound_relu,
    grad_dev_bound_smooth, grad_lower_bound, per_sample_grad_dev_bound, value_bound,
};
use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::landscape::{estimate_grad_deviation_sup, flip_fraction};
use crate::linalg::{dot, norm};
use crate::network::Network;
use crate::rng::{self, derive_seed, tag};
use crate::stats::binomial_slack;
use crate::trials::TrialDesign;

/// A bound together with the statistic it controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundKind {
    /// Sum of `k` Rademacher variables (`σ = c = 1`).
    Bernstein,
    /// `|Σ (wₗ·x)² − k|`.
    ChiSquared,
    /// `|f(x)|`.
    Value(Activation),
    /// `‖∇f(x)‖`, a lower bound.
    GradLower(Activation),
    /// `Φ(v, δ)` for one random unit `v` and `‖δ‖ = R`.
    PerSampleGradDev(Activation),
    /// Fraction of units flipped by a random `‖δ‖ = R`.
    FlipSingle,
    /// Fraction of units at `x+δ` that some `ε`-move can flip.
    FlipBall,
    /// Sampled `sup_{‖δ‖≤R} ‖∇f(x) − ∇f(x+δ)‖`.
    GradDevSup(Activation),
}

impl BoundKind {
    /// Bounds run by `verify-bounds` when no list is given.
    pub const DEFAULT_SUITE: [BoundKind; 10] = [
        BoundKind::Value(Activation::Relu),
        BoundKind::Value(Activation::Tanh),
        BoundKind::GradLower(Activation::Relu),
        BoundKind::GradLower(Activation::Tanh),
        BoundKind::ChiSquared,
        BoundKind::PerSampleGradDev(Activation::Tanh),
        BoundKind::PerSampleGradDev(Activation::Relu),
        BoundKind::FlipSingle,
        BoundKind::FlipBall,
        BoundKind::Bernstein,
    ];

    pub fn name(self) -> String {
        match self {
            BoundKind::Bernstein => "bernstein".into(),
            BoundKind::ChiSquared => "chisq".into(),
            BoundKind::Value(a) => format!("value_{a}"),
            BoundKind::GradLower(a) => format!("grad_lower_{a}"),
            BoundKind::PerSampleGradDev(a) => format!("per_sample_grad_dev_{a}"),
            BoundKind::FlipSingle => "flip_single".into(),
            BoundKind::FlipBall => "flip_ball".into(),
            BoundKind::GradDevSup(a) => format!("grad_dev_sup_{a}"),
        }
    }

    /// Whether the bound is violated by falling *below* it.
    pub fn is_lower(self) -> bool {
        matches!(self, BoundKind::GradLower(_))
    }

    fn code(self) -> u64 {
        let (base, a) = match self {
            BoundKind::Bernstein => (0, None),
            BoundKind::ChiSquared => (1, None),
            BoundKind::Value(a) => (2, Some(a)),
            BoundKind::GradLower(a) => (3, Some(a)),
            BoundKind::PerSampleGradDev(a) => (4, Some(a)),
            BoundKind::FlipSingle => (5, None),
            BoundKind::FlipBall => (6, None),
            BoundKind::GradDevSup(a) => (7, Some(a)),
        };
        base * 4 + a.map_or(0, |a| u64::from(a.id()) + 1)
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let with_act = |rest: &str, make: fn(Activation) -> BoundKind| {
            rest.parse::<Activation>()
                .map(make)
                .map_err(|_| Error::UnknownBound(s.to_string()))
        };
        match s {
            "bernstein" => Ok(BoundKind::Bernstein),
            "chisq" => Ok(BoundKind::ChiSquared),
            "flip_single" => Ok(BoundKind::FlipSingle),
            "flip_ball" => Ok(BoundKind::FlipBall),
            _ => {
                if let Some(rest) = s.strip_prefix("value_") {
                    with_act(rest, BoundKind::Value)
                } else if let Some(rest) = s.strip_prefix("grad_lower_") {
                    with_act(rest, BoundKind::GradLower)
                } else if let Some(rest) = s.strip_prefix("per_sample_grad_dev_") {
                    with_act(rest, BoundKind::PerSampleGradDev)
                } else if let Some(rest) = s.strip_prefix("grad_dev_sup_") {
                    with_act(rest, BoundKind::GradDevSup)
                } else {
                    Err(Error::UnknownBound(s.to_string()))
                }
            }
        }
    }
}

/// Problem sizes and auxiliary constants for one verification.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundParams {
    pub d: usize,
    pub k: usize,
    pub gamma: f64,
    /// Perturbation radius `R`.
    pub radius: f64,
    pub epsilon: f64,
    /// Inputs evaluated per sampled network.
    pub inputs_per_net: usize,
    /// Random directions probed by the sampled supremum.
    pub probe_dirs: usize,
    /// Radii probed along each direction.
    pub probe_radii: usize,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            d: 1000,
            k: 1000,
            gamma: 0.05,
            radius: 1.0,
            epsilon: 0.1,
            inputs_per_net: 100,
            probe_dirs: 8,
            probe_radii: 4,
        }
    }
}

impl BoundParams {
    /// Suite defaults at a nominal size: `d = k = size`, except the ReLU
    /// per-sample bound which runs at `d = 2·size`.
    pub fn for_size(kind: BoundKind, size: usize) -> Self {
        let mut p = Self {
            d: size,
            k: size,
            ..Self::default()
        };
        if kind == BoundKind::PerSampleGradDev(Activation::Relu) {
            p.d = 2 * size;
        }
        p
    }
}

/// Outcome of one exceedance check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub bound_value: f64,
    pub empirical_exceed_rate: f64,
    pub trials: usize,
    pub pass: bool,
}

fn threshold(kind: BoundKind, p: &BoundParams, gamma: f64) -> Result<f64> {
    let (d, k) = (p.d as f64, p.k as f64);
    match kind {
        BoundKind::Bernstein => bernstein_bound(1.0, 1.0, k, gamma),
        BoundKind::ChiSquared => chisq_deviation_bound(k, gamma),
        BoundKind::Value(a) => value_bound(a, k, gamma),
        BoundKind::GradLower(a) => grad_lower_bound(a, k, d, gamma, a.gaussian_moment(1, 2)?),
        BoundKind::PerSampleGradDev(a) => {
            per_sample_grad_dev_bound(a, p.radius, d, k, gamma, a.lipschitz_of_derivative().unwrap_or(0.0))
        }
        BoundKind::FlipSingle => flip_prob_single(p.radius, d),
        BoundKind::FlipBall => flip_prob_ball(p.radius, d, p.epsilon),
        BoundKind::GradDevSup(a) => match a.lipschitz_of_derivative() {
            Some(l) => grad_dev_bound_smooth(p.radius, l, k, d, gamma),
            None => grad_dev_bound_relu(p.radius, k, d, gamma),
        },
    }
}

fn report_params(kind: BoundKind, p: &BoundParams, gamma: f64) -> Result<BTreeMap<String, f64>> {
    let mut m = BTreeMap::new();
    m.insert("k".to_string(), p.k as f64);
    m.insert("gamma".to_string(), gamma);
    if kind == BoundKind::Bernstein {
        m.insert("sigma".to_string(), 1.0);
        m.insert("c".to_string(), 1.0);
        return Ok(m);
    }
    m.insert("d".to_string(), p.d as f64);
    m.insert("inputs_per_net".to_string(), p.inputs_per_net as f64);
    match kind {
        BoundKind::GradLower(a) => {
            m.insert("c_psi_sq".to_string(), a.gaussian_moment(1, 2)?);
        }
        BoundKind::PerSampleGradDev(a) | BoundKind::GradDevSup(a) => {
            m.insert("R".to_string(), p.radius);
            if let Some(l) = a.lipschitz_of_derivative() {
                m.insert("L".to_string(), l);
            }
        }
        BoundKind::FlipSingle => {
            m.insert("R".to_string(), p.radius);
        }
        BoundKind::FlipBall => {
            m.insert("R".to_string(), p.radius);
            m.insert("epsilon".to_string(), p.epsilon);
        }
        _ => {}
    }
    Ok(m)
}

fn rademacher_sum(k: usize, seed: u64) -> f64 {
    let mut r = rng::stream(seed, &[]);
    let mut ones = 0u64;
    let mut left = k;
    while left >= 64 {
        ones += u64::from(r.next_u64().count_ones());
        left -= 64;
    }
    if left > 0 {
        ones += u64::from((r.next_u64() & ((1u64 << left) - 1)).count_ones());
    }
    2.0 * ones as f64 - k as f64
}

/// `Φ(v, δ) = (1/√k) Σ aₗ (wₗ·v)(ψ'(wₗ·x) − ψ'(wₗ·(x+δ)))` for each
/// `(x, v, δ)` triple, computed with one product against all triples.
fn per_sample_phis(net: &Network, triples: &[(&[f64], Vec<f64>, Vec<f64>)]) -> Result<Vec<f64>> {
    if net.depth() != 1 {
        return Err(Error::Unsupported(format!(
            "per-sample deviation requires depth 1, network has depth {}",
            net.depth()
        )));
    }
    let w = &net.layers()[0];
    let d = w.cols();
    let cols = 3 * triples.len();
    let mut b = vec![0.0; d * cols];
    for (j, (x, v, delta)) in triples.iter().enumerate() {
        for (c, src) in [*x, v.as_slice(), delta.as_slice()].into_iter().enumerate() {
            if src.len() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    got: src.len(),
                });
            }
            for (i, &val) in src.iter().enumerate() {
                b[i * cols + 3 * j + c] = val;
            }
        }
    }
    // prod[ℓ·cols + 3j + c] = wₗ·(x_j, v_j, δ_j)[c]
    let prod = w.matmul(&b, cols);
    let act = net.activation();
    let signs = net.output_signs();
    Ok((0..triples.len())
        .map(|j| {
            let total: f64 = signs
                .iter()
                .enumerate()
                .map(|(l, a)| {
                    let row = &prod[l * cols + 3 * j..l * cols + 3 * j + 3];
                    a * row[1] * (act.deriv(row[0]) - act.deriv(row[0] + row[2]))
                })
                .sum();
            total * net.output_scale()
        })
        .collect())
}

fn scaled_unit(seed: u64, trial: usize, which: u64, d: usize, scale: f64) -> Vec<f64> {
    let mut r = rng::stream(seed, &[tag::BOUND, trial as u64, which]);
    let mut u = rng::unit_vector(&mut r, d);
    u.iter_mut().for_each(|c| *c *= scale);
    u
}

fn design(a: Activation, p: &BoundParams) -> TrialDesign {
    TrialDesign::independent(p.d, p.k, a).with_inputs_per_net(p.inputs_per_net)
}

/// Draws the controlled statistic `trials` times.
fn sample_statistic(kind: BoundKind, p: &BoundParams, trials: usize, seed: u64) -> Result<Vec<f64>> {
    if trials == 0 {
        return Err(Error::InvalidTrials);
    }
    let seed = derive_seed(seed, &[tag::BOUND, kind.code()]);
    let (d, r) = (p.d, p.radius);
    match kind {
        BoundKind::Bernstein => Ok((0..trials)
            .into_par_iter()
            .map(|t| rademacher_sum(p.k, derive_seed(seed, &[t as u64])))
            .collect()),
        BoundKind::ChiSquared => design(Activation::Relu, p).run(trials, seed, |net, x, _| {
            let z = net.layers()[0].matvec(x);
            Ok((dot(&z, &z) - p.k as f64).abs())
        }),
        BoundKind::Value(a) => design(a, p).run(trials, seed, |net, x, _| Ok(net.forward(x)?.abs())),
        BoundKind::GradLower(a) => design(a, p).run(trials, seed, |net, x, _| Ok(norm(&net.gradient(x)?))),
        BoundKind::PerSampleGradDev(a) => design(a, p).run_per_net(trials, seed, |net, inputs, first| {
            let triples: Vec<_> = inputs
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    (
                        x.coords(),
                        scaled_unit(seed, first + i, 0, d, 1.0),
                        scaled_unit(seed, first + i, 1, d, r),
                    )
                })
                .collect();
            per_sample_phis(net, &triples)
        }),
        BoundKind::FlipSingle => design(Activation::Relu, p).run(trials, seed, |net, x, t| {
            flip_fraction(net, x, &scaled_unit(seed, t, 1, d, r))
        }),
        BoundKind::FlipBall => design(Activation::Relu, p).run(trials, seed, |net, x, t| {
            // Some x+δ' with ‖δ'−δ‖ ≤ ε changes the sign of wₗ·(·) iff |wₗ·(x+δ)| ≤ ε‖wₗ‖.
            let delta = scaled_unit(seed, t, 1, d, r);
            let ray = net.ray(x, &delta)?;
            let w = &net.layers()[0];
            let near = ray
                .first_layer(1.0)
                .iter()
                .zip(w.row_iter())
                .filter(|(z, row)| z.abs() <= p.epsilon * norm(row))
                .count();
            Ok(near as f64 / p.k as f64)
        }),
        BoundKind::GradDevSup(a) => design(a, p).run(trials, seed, |net, x, t| {
            estimate_grad_deviation_sup(
                net,
                x,
                r,
                p.probe_dirs,
                p.probe_radii,
                derive_seed(seed, &[tag::PROBE, t as u64]),
            )
        }),
    }
}

fn exceeds(kind: BoundKind, stat: f64, bound: f64) -> bool {
    if kind.is_lower() {
        stat < bound
    } else {
        stat > bound
    }
}

/// Checks `kind` at several confidence levels against one shared sample.
pub fn verify_bound_gammas(
    kind: BoundKind,
    params: &BoundParams,
    gammas: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<BoundReport>> {
    if trials == 0 {
        return Err(Error::InvalidTrials);
    }
    let bounds = gammas
        .iter()
        .map(|&g| threshold(kind, params, g))
        .collect::<Result<Vec<f64>>>()?;
    let samples = sample_statistic(kind, params, trials, seed)?;
    gammas
        .iter()
        .zip(bounds)
        .map(|(&gamma, bound_value)| {
            let hits = samples.iter().filter(|&&s| exceeds(kind, s, bound_value)).count();
            let rate = hits as f64 / trials as f64;
            Ok(BoundReport {
                name: kind.name(),
                params: report_params(kind, params, gamma)?,
                bound_value,
                empirical_exceed_rate: rate,
                trials,
                pass: rate <= gamma + binomial_slack(gamma, trials as u64),
            })
        })
        .collect()
}

/// Checks the bound called `name` at `params.gamma`.
pub fn verify_bound(name: &str, params: &BoundParams, trials: usize, seed: u64) -> Result<BoundReport> {
    let kind: BoundKind = name.parse()?;
    let mut reports = verify_bound_gammas(kind, params, &[params.gamma], trials, seed)?;
    Ok(reports.remove(0))
}
