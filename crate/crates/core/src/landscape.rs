//! Monte-Carlo estimators for the local geometry of `f` around `x ∈ √d·S^{d−1}`:
//! value and gradient scale, Hessian operator norm, gradient deviation over a
//! ball, activation flips, and a direct check of the gradient-step identity
//!
//! ```text
//! |f(x + η∇f/‖∇f‖²) − (f(x) + η)| ≤ |η| · sup_t ‖∇f(x + t·η∇f/‖∇f‖²) − ∇f(x)‖ / ‖∇f(x)‖.
//! ```
//!
//! Suprema are estimated by sampling and are therefore lower estimates.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::attack::{sign_changed, MIN_GRADIENT_NORM};
use crate::error::{Error, Result};
use crate::linalg::{self, column_norms, norm};
use crate::network::{point_along, Network};
use crate::rng::{self, tag};
use crate::stats::{order_statistic, Moments};
use crate::trials::TrialDesign;

/// Quantile levels written to JSON.
pub const REPORTED_QUANTILES: [f64; 7] = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];

/// Segment resolution for the gradient-step check.
pub const LEMMA_POINTS_SMOOTH: usize = 1000;
pub const LEMMA_POINTS_RELU: usize = 10_000;

/// Columns per batched `Wᵀ·C` product.
const BATCH_COLUMNS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    ValueAbs,
    GradNorm,
    HessianOpnorm,
    GradDeviationSup,
    FlipFraction,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::ValueAbs => "value_abs",
            Quantity::GradNorm => "grad_norm",
            Quantity::HessianOpnorm => "hessian_opnorm",
            Quantity::GradDeviationSup => "grad_deviation_sup",
            Quantity::FlipFraction => "flip_fraction",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Quantity::ValueAbs,
            Quantity::GradNorm,
            Quantity::HessianOpnorm,
            Quantity::GradDeviationSup,
            Quantity::FlipFraction,
        ]
        .into_iter()
        .find(|q| q.name() == s)
        .ok_or_else(|| Error::Parse(format!("unknown quantity `{s}`")))
    }
}

/// Summary of one sampled landscape quantity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LandscapeStats {
    pub quantity: Quantity,
    pub d: usize,
    pub k: usize,
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
    pub quantiles: BTreeMap<String, f64>,
    #[serde(skip)]
    sorted: Vec<f64>,
}

impl LandscapeStats {
    pub fn from_samples(
        quantity: Quantity,
        d: usize,
        k: usize,
        radius: Option<f64>,
        mut samples: Vec<f64>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidTrials);
        }
        let m = Moments::from_slice(&samples);
        samples.sort_by(f64::total_cmp);
        let quantiles = REPORTED_QUANTILES
            .iter()
            .map(|&p| (format!("{p}"), order_statistic(&samples, p)))
            .collect();
        Ok(Self {
            quantity,
            d,
            k,
            radius,
            trials: samples.len(),
            mean: m.mean(),
            std: m.std(),
            quantiles,
            sorted: samples,
        })
    }

    /// Lower order statistic at level `p`.
    pub fn empirical_quantile(&self, p: f64) -> f64 {
        order_statistic(&self.sorted, p)
    }

    /// Samples in ascending order.
    pub fn sorted_samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn median(&self) -> f64 {
        self.empirical_quantile(0.5)
    }
}

/// Value and gradient norm at one sampled `(net, x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointSample {
    pub value: f64,
    pub grad_norm: f64,
}

pub fn sample_points(design: &TrialDesign, trials: usize, seed: u64) -> Result<Vec<PointSample>> {
    design.run(trials, seed, |net, x, _| {
        let (value, grad) = net.value_and_gradient(x)?;
        Ok(PointSample {
            value,
            grad_norm: norm(&grad),
        })
    })
}

/// `|f(x)|` over independent `(net, x)` pairs.
pub fn estimate_value_stats(
    d: usize,
    k: usize,
    activation: Activation,
    trials: usize,
    seed: u64,
) -> Result<LandscapeStats> {
    estimate_value_stats_with(&TrialDesign::independent(d, k, activation), trials, seed)
}

pub fn estimate_value_stats_with(design: &TrialDesign, trials: usize, seed: u64) -> Result<LandscapeStats> {
    let values = design.run(trials, seed, |net, x, _| Ok(net.forward(x)?.abs()))?;
    LandscapeStats::from_samples(Quantity::ValueAbs, design.d, design.k, None, values)
}

/// `‖∇f(x)‖` over independent `(net, x)` pairs.
pub fn estimate_gradient_norm(
    d: usize,
    k: usize,
    activation: Activation,
    trials: usize,
    seed: u64,
) -> Result<LandscapeStats> {
    estimate_gradient_norm_with(&TrialDesign::independent(d, k, activation), trials, seed)
}

pub fn estimate_gradient_norm_with(design: &TrialDesign, trials: usize, seed: u64) -> Result<LandscapeStats> {
    let norms = design.run(trials, seed, |net, x, _| Ok(norm(&net.gradient(x)?)))?;
    LandscapeStats::from_samples(Quantity::GradNorm, design.d, design.k, None, norms)
}

/// Operator norm of `∇²f(x)` by power iteration on Hessian-vector products.
///
/// `‖H v_t‖` is non-decreasing along the iteration and converges to
/// `max |λ|` from below; iteration stops early once it stalls.
pub fn estimate_hessian_opnorm(net: &Network, x: &[f64], iterations: usize) -> Result<f64> {
    if iterations < 50 {
        return Err(Error::InvalidArgument(format!(
            "power iteration needs at least 50 iterations, got {iterations}"
        )));
    }
    let h = net.hessian_at(x)?;
    let mut r = rng::stream(net.seed(), &[tag::POWER]);
    let mut v = rng::unit_vector(&mut r, h.dim());
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let hv = h.apply(&v)?;
        let n = norm(&hv);
        if n == 0.0 {
            return Ok(0.0);
        }
        let converged = n - estimate <= 1e-14 * n;
        estimate = n;
        if converged {
            break;
        }
        v = hv.into_iter().map(|c| c / n).collect();
    }
    Ok(estimate)
}

pub fn estimate_hessian_opnorm_stats(
    design: &TrialDesign,
    iterations: usize,
    trials: usize,
    seed: u64,
) -> Result<LandscapeStats> {
    let v = design.run(trials, seed, |net, x, _| estimate_hessian_opnorm(net, x, iterations))?;
    LandscapeStats::from_samples(Quantity::HessianOpnorm, design.d, design.k, None, v)
}

/// For depth-1 networks: `‖Wᵀ c_j‖` for the columns
/// `c_j = (aₗ/√k)(ψ'(zₗ + Δ_{ℓj}) − ψ'(zₗ))`, batched through `matmul_t`.
///
/// `shift(ℓ, j)` gives the pre-activation change `Δ_{ℓj}`.
fn depth_one_deviation_norms(
    net: &Network,
    z: &[f64],
    columns: usize,
    shift: impl Fn(usize, usize) -> f64,
) -> Vec<f64> {
    let w = &net.layers()[0];
    let act = net.activation();
    let scale = net.output_scale();
    let k = z.len();
    let base: Vec<f64> = z.iter().map(|&v| act.deriv(v)).collect();
    let mut out = Vec::with_capacity(columns);
    let mut start = 0;
    while start < columns {
        let m = BATCH_COLUMNS.min(columns - start);
        let mut c = vec![0.0; k * m];
        let mut nonzero = false;
        for l in 0..k {
            let a = scale * net.output_signs()[l];
            let row = &mut c[l * m..(l + 1) * m];
            for (j, cell) in row.iter_mut().enumerate() {
                let v = a * (act.deriv(z[l] + shift(l, start + j)) - base[l]);
                nonzero |= v != 0.0;
                *cell = v;
            }
        }
        if nonzero {
            out.extend(column_norms(&w.matmul_t(&c, m), w.cols(), m));
        } else {
            out.extend(std::iter::repeat_n(0.0, m));
        }
        start += m;
    }
    out
}

/// Sampled `sup_{‖δ‖≤R} ‖∇f(x) − ∇f(x+δ)‖`.
///
/// Probes `num_dirs` random unit directions plus the gradient direction, each
/// at the radii `R·j/num_radii`, `j = 1..=num_radii`. This is a lower estimate
/// of the true supremum.
pub fn estimate_grad_deviation_sup(
    net: &Network,
    x: &[f64],
    radius: f64,
    num_dirs: usize,
    num_radii: usize,
    seed: u64,
) -> Result<f64> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    if num_radii == 0 {
        return Err(Error::InvalidArgument("num_radii must be at least 1".into()));
    }
    let d = net.input_dim();
    let grad = net.gradient(x)?;
    let gn = norm(&grad);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(num_dirs + 1);
    if gn > 0.0 {
        dirs.push(grad.iter().map(|g| g / gn).collect());
    }
    for i in 0..num_dirs {
        let mut r = rng::stream(seed, &[tag::PROBE, i as u64]);
        dirs.push(rng::unit_vector(&mut r, d));
    }
    if dirs.is_empty() {
        return Ok(0.0);
    }
    let radii: Vec<f64> = (1..=num_radii).map(|j| radius * j as f64 / num_radii as f64).collect();

    if net.depth() == 1 {
        let w = &net.layers()[0];
        let z = w.matvec(x);
        let m = dirs.len();
        let mut dmat = vec![0.0; d * m];
        for (j, dir) in dirs.iter().enumerate() {
            for (i, &v) in dir.iter().enumerate() {
                dmat[i * m + j] = v;
            }
        }
        // slopes[ℓ·m + j] = wₗ·dir_j
        let slopes = w.matmul(&dmat, m);
        let nr = radii.len();
        let norms = depth_one_deviation_norms(net, &z, m * nr, |l, col| {
            let (j, r) = (col / nr, col % nr);
            radii[r] * slopes[l * m + j]
        });
        return Ok(norms.into_iter().fold(0.0, f64::max));
    }

    let mut best = 0.0f64;
    for dir in &dirs {
        for &r in &radii {
            let g2 = net.gradient(&point_along(x, dir, r))?;
            best = best.max(norm(&linalg::sub(&g2, &grad)));
        }
    }
    Ok(best)
}

/// Fraction of first-layer units whose pre-activation sign differs between
/// `x` and `x + δ` (`sign(0) = +1`).
pub fn flip_fraction(net: &Network, x: &[f64], delta: &[f64]) -> Result<f64> {
    if net.depth() != 1 {
        return Err(Error::Unsupported(format!(
            "flip_fraction requires depth 1, network has depth {}",
            net.depth()
        )));
    }
    let ray = net.ray(x, delta)?;
    let flips = ray
        .base()
        .iter()
        .zip(ray.slope())
        .filter(|(&z, &s)| sign_changed(z, z + s))
        .count();
    Ok(flips as f64 / net.hidden_width() as f64)
}

/// Both sides of the gradient-step inequality at `(x, η)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub points: usize,
}

impl LemmaCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// `lhs = |f(x + η∇f/‖∇f‖²) − (f(x) + η)|`, exact from two forward passes.
///
/// `rhs = |η| · maxᵢ ‖∇f(x + tᵢ·s∇f) − ∇f(x)‖ / ‖∇f(x)‖`, `s = η/‖∇f‖²`, over
/// evenly spaced `tᵢ ∈ [0, 1]`: 1000 points plus the slack
/// `L · ‖segment‖/1000 · |η|/‖∇f‖` for smooth activations, 10⁴ points and no
/// slack for ReLU (finitely many activation patterns along the segment).
pub fn check_gradient_descent_lemma(net: &Network, x: &[f64], eta: f64) -> Result<LemmaCheck> {
    if !eta.is_finite() {
        return Err(Error::InvalidArgument(format!("eta must be finite, got {eta}")));
    }
    let (value, grad) = net.value_and_gradient(x)?;
    let gn = norm(&grad);
    if gn.is_nan() || gn < MIN_GRADIENT_NORM {
        return Err(Error::ZeroGradient(gn));
    }
    let step = eta / (gn * gn);
    let lhs = (net.forward(&point_along(x, &grad, step))? - (value + eta)).abs();

    let act = net.activation();
    let points = if act.is_smooth() {
        LEMMA_POINTS_SMOOTH
    } else {
        LEMMA_POINTS_RELU
    };
    let ts: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();

    let max_dev = if net.depth() == 1 {
        let ray = net.ray(x, &grad)?;
        let slope = ray.slope();
        depth_one_deviation_norms(net, ray.base(), points, |l, i| ts[i] * step * slope[l])
            .into_iter()
            .fold(0.0, f64::max)
    } else {
        let mut best = 0.0f64;
        for &t in &ts {
            let g2 = net.gradient(&point_along(x, &grad, t * step))?;
            best = best.max(norm(&linalg::sub(&g2, &grad)));
        }
        best
    };

    let mut rhs = eta.abs() * max_dev / gn;
    if let Some(lip) = act.lipschitz_of_derivative() {
        let segment = eta.abs() / gn;
        rhs += lip * segment / points as f64 * eta.abs() / gn;
    }
    Ok(LemmaCheck { lhs, rhs, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::network::sample_input;

    #[test]
    fn stats_json_shape() {
        let s = LandscapeStats::from_samples(Quantity::GradNorm, 3, 4, Some(1.5), vec![3.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(s.trials, 4);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median(), 2.0);
        assert!(s.std >= 0.0);
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(v["quantity"], "grad_norm");
        assert_eq!(v["R"], 1.5);
        assert_eq!(v["quantiles"]["0.5"], 2.0);
        assert!(LandscapeStats::from_samples(Quantity::GradNorm, 3, 4, None, vec![]).is_err());
    }

    #[test]
    fn quantity_names_round_trip() {
        for q in [
            "value_abs",
            "grad_norm",
            "hessian_opnorm",
            "grad_deviation_sup",
            "flip_fraction",
        ] {
            assert_eq!(q.parse::<Quantity>().unwrap().name(), q);
        }
        assert!("nope".parse::<Quantity>().is_err());
    }

    #[test]
    fn single_trial_is_reproducible() {
        let a = estimate_value_stats(20, 30, Activation::Relu, 1, 5).unwrap();
        let b = estimate_value_stats(20, 30, Activation::Relu, 1, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials, 1);
    }

    #[test]
    fn hessian_opnorm_at_origin_is_zero() {
        let net = Network::sample(1, 10, 20, Activation::Tanh, 1).unwrap();
        assert!(estimate_hessian_opnorm(&net, &[0.0; 10], 50).unwrap() <= 1e-12);
        assert!(estimate_hessian_opnorm(&net, &[0.0; 10], 10).is_err());
        let relu = Network::sample(1, 10, 20, Activation::Relu, 1).unwrap();
        let x = sample_input(10, 2).unwrap();
        assert!(matches!(
            estimate_hessian_opnorm(&relu, &x, 60),
            Err(Error::NotSmooth(_))
        ));
    }

    #[test]
    fn grad_deviation_vanishes_with_radius() {
        let net = Network::sample(1, 30, 40, Activation::Tanh, 3).unwrap();
        let x = sample_input(30, 4).unwrap();
        let v = estimate_grad_deviation_sup(&net, &x, 1e-9, 20, 3, 1).unwrap();
        assert!(v <= 1e-8, "{v}");
        assert!(estimate_grad_deviation_sup(&net, &x, 0.0, 20, 3, 1).is_err());
    }

    #[test]
    fn grad_deviation_fast_path_matches_direct_gradients() {
        for act in Activation::ALL {
            let net = Network::sample(1, 25, 35, act, 6).unwrap();
            let x = sample_input(25, 7).unwrap();
            let fast = estimate_grad_deviation_sup(&net, &x, 2.0, 5, 4, 9).unwrap();
            // Same probes evaluated through full gradients.
            let g = net.gradient(&x).unwrap();
            let gn = norm(&g);
            let mut dirs = vec![g.iter().map(|v| v / gn).collect::<Vec<_>>()];
            for i in 0..5 {
                let mut r = rng::stream(9, &[tag::PROBE, i]);
                dirs.push(rng::unit_vector(&mut r, 25));
            }
            let mut slow = 0.0f64;
            for dir in &dirs {
                for j in 1..=4 {
                    let g2 = net.gradient(&point_along(&x, dir, 2.0 * j as f64 / 4.0)).unwrap();
                    slow = slow.max(norm(&linalg::sub(&g2, &g)));
                }
            }
            assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0), "{act}: {fast} vs {slow}");
        }
    }

    #[test]
    fn flip_fraction_cases() {
        let net = Network::sample(1, 50, 300, Activation::Relu, 1).unwrap();
        let x = sample_input(50, 2).unwrap();
        assert_eq!(flip_fraction(&net, &x, &[0.0; 50]).unwrap(), 0.0);
        let reflect: Vec<f64> = x.iter().map(|v| -2.0 * v).collect();
        assert_eq!(flip_fraction(&net, &x, &reflect).unwrap(), 1.0);
        let deep = Network::sample(2, 50, 30, Activation::Relu, 1).unwrap();
        assert!(flip_fraction(&deep, &x, &reflect).is_err());
    }

    #[test]
    fn step_check_on_linear_region_is_exact() {
        // Both neurons stay on along the whole segment.
        let w = Matrix::from_rows(&[vec![1.0, 0.2], vec![0.1, 1.0]]);
        let net = Network::from_parts(Activation::Relu, vec![w], vec![1.0, -1.0], 0).unwrap();
        let x = vec![5.0, 4.0];
        let c = check_gradient_descent_lemma(&net, &x, -0.3).unwrap();
        assert!(c.lhs <= 1e-10, "{c:?}");
        assert!(c.rhs <= 1e-10, "{c:?}");
        assert_eq!(c.points, LEMMA_POINTS_RELU);
    }

    #[test]
    fn step_check_with_zero_eta() {
        let net = Network::sample(1, 20, 30, Activation::Tanh, 1).unwrap();
        let x = sample_input(20, 2).unwrap();
        let c = check_gradient_descent_lemma(&net, &x, 0.0).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
    }

    #[test]
    fn step_check_fast_path_matches_deep_path_formula() {
        // The batched depth-1 path must agree with explicit gradient differences.
        let net = Network::sample(1, 15, 25, Activation::Tanh, 12).unwrap();
        let x = sample_input(15, 13).unwrap();
        let eta = 1.3;
        let c = check_gradient_descent_lemma(&net, &x, eta).unwrap();
        let g = net.gradient(&x).unwrap();
        let gn = norm(&g);
        let step = eta / (gn * gn);
        let mut best = 0.0f64;
        for i in 0..LEMMA_POINTS_SMOOTH {
            let t = i as f64 / (LEMMA_POINTS_SMOOTH - 1) as f64;
            let g2 = net.gradient(&point_along(&x, &g, t * step)).unwrap();
            best = best.max(norm(&linalg::sub(&g2, &g)));
        }
        let slack = Activation::Tanh.lipschitz_of_derivative().unwrap() * (eta / gn) / 1000.0 * eta / gn;
        let expected = eta * best / gn + slack;
        assert!((c.rhs - expected).abs() <= 1e-12 * expected);
        assert!(c.holds());
    }

    #[test]
    fn step_check_rejects_zero_gradient() {
        let w = Matrix::from_rows(&[vec![1.0, 0.0]]);
        let net = Network::from_parts(Activation::Relu, vec![w], vec![1.0], 0).unwrap();
        assert!(matches!(
            check_gradient_descent_lemma(&net, &[-1.0, 0.0], 1.0),
            Err(Error::ZeroGradient(_))
        ));
    }
}
