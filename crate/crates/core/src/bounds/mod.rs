//! Closed-form high-probability bounds and their Monte-Carlo verification.
//!
//! Each evaluator returns the threshold that the matching statistic should
//! respect with probability at least `1 − γ`. Lower bounds whose inner term is
//! negative (small-width regime) are clamped to 0.

mod verify;

pub use verify::{verify_bound, verify_bound_gammas, BoundKind, BoundParams, BoundReport};

use crate::activation::Activation;
use crate::error::{Error, Result};

fn log_inv(gamma: f64) -> f64 {
    (1.0 / gamma).ln()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

fn check_at_least_one(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be at least 1, got {v}")))
    }
}

/// Bernstein: `Σ_{ℓ≤k} Xₗ ≤ √(2σ²k·log(1/γ)) + c·log(1/γ)`.
pub fn bernstein_bound(sigma: f64, c: f64, k: f64, gamma: f64) -> Result<f64> {
    check_positive("sigma", sigma)?;
    check_positive("c", c)?;
    check_at_least_one("k", k)?;
    check_gamma(gamma)?;
    let l = log_inv(gamma);
    Ok((2.0 * sigma * sigma * k * l).sqrt() + c * l)
}

/// `|Σ_{ℓ≤k} Xₗ² − k| ≤ 4√(k·log(2/γ))` for standard Gaussians.
pub fn chisq_deviation_bound(k: f64, gamma: f64) -> Result<f64> {
    check_at_least_one("k", k)?;
    check_gamma(gamma)?;
    Ok(4.0 * (k * (2.0 / gamma).ln()).sqrt())
}

/// Upper bound on `|f(x)|` for a depth-1 network.
///
/// ReLU: `√(2 log(2/γ))(1 + √(log(2/γ)/k))`;
/// smooth 1-Lipschitz: `√(2 log(1/γ))(1 + √(log(2/γ)/k))`.
pub fn value_bound(activation: Activation, k: f64, gamma: f64) -> Result<f64> {
    check_at_least_one("k", k)?;
    check_gamma(gamma)?;
    let l2 = (2.0 / gamma).ln();
    let lead = match activation {
        Activation::Relu => l2,
        Activation::Tanh => log_inv(gamma),
    };
    Ok((2.0 * lead).sqrt() * (1.0 + (l2 / k).sqrt()))
}

/// Lower bound on `‖∇f(x)‖` for a depth-1 network, valid for `γ ∈ (0, 2/e)`.
///
/// Smooth: `(c_ψ² − √(2 log(4/γ)/k)(1 + √(log(4/γ)/k)))^{1/2} (1 − 5√(log(8/γ)/d))`;
/// ReLU:   `(c_ψ² − √(2 log(4/γ)/k)(1 + √(log(1/γ)/k)))^{1/2} (1 − 5√(log(4/γ)/d))`
/// with `c_ψ² = E[ψ'(X)²]` (1/2 for ReLU). Returns 0 when either factor is
/// non-positive.
pub fn grad_lower_bound(activation: Activation, k: f64, d: f64, gamma: f64, c_psi_sq: f64) -> Result<f64> {
    check_at_least_one("k", k)?;
    check_at_least_one("d", d)?;
    check_positive("c_psi_sq", c_psi_sq)?;
    let two_over_e = 2.0 / std::f64::consts::E;
    if !(gamma > 0.0 && gamma < two_over_e) {
        return Err(Error::Domain(format!("gamma must lie in (0, 2/e), got {gamma}")));
    }
    let l4 = (4.0 / gamma).ln();
    let (inner_tail, outer_log) = match activation {
        Activation::Relu => (log_inv(gamma), l4),
        Activation::Tanh => (l4, (8.0 / gamma).ln()),
    };
    let inner = c_psi_sq - (2.0 * l4 / k).sqrt() * (1.0 + (inner_tail / k).sqrt());
    let outer = 1.0 - 5.0 * (outer_log / d).sqrt();
    if inner <= 0.0 || outer <= 0.0 {
        return Ok(0.0);
    }
    Ok(inner.sqrt() * outer)
}

/// Uniform gradient deviation over `‖δ‖ ≤ R` for an `L`-smooth activation:
/// `20 R L (√(log(k/γ)/d) + log(1/γ)/√k)`, for `R ≥ 1`.
pub fn grad_dev_bound_smooth(radius: f64, lipschitz: f64, k: f64, d: f64, gamma: f64) -> Result<f64> {
    check_at_least_one("R", radius)?;
    if !(lipschitz.is_finite() && lipschitz >= 0.0) {
        return Err(Error::Domain(format!("L must be non-negative, got {lipschitz}")));
    }
    check_at_least_one("k", k)?;
    check_at_least_one("d", d)?;
    check_gamma(gamma)?;
    Ok(20.0 * radius * lipschitz * (((k / gamma).ln() / d).sqrt() + log_inv(gamma) / k.sqrt()))
}

/// Uniform gradient deviation over `‖δ‖ ≤ R` for ReLU:
/// `20 (R log²(Rk) √(log d/d))^{1/4} + 40 √(d/k) log(Rk)`.
///
/// Requires `1 ≤ R ≤ √d/2`, `√k ≥ 52` and `d ≥ log(1/γ)`.
pub fn grad_dev_bound_relu(radius: f64, k: f64, d: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if !(radius >= 1.0 && radius <= d.sqrt() / 2.0) {
        return Err(Error::PreconditionViolated(format!(
            "1 ≤ R ≤ √d/2 fails for R={radius}, d={d}"
        )));
    }
    if k.sqrt() < 52.0 {
        return Err(Error::PreconditionViolated(format!("√k ≥ 52 fails for k={k}")));
    }
    if d < log_inv(gamma) {
        return Err(Error::PreconditionViolated(format!(
            "d ≥ log(1/γ) fails for d={d}, γ={gamma}"
        )));
    }
    let lrk = (radius * k).ln();
    let micro = (radius * lrk * lrk * (d.ln() / d).sqrt()).powf(0.25);
    Ok(20.0 * micro + 40.0 * (d / k).sqrt() * lrk)
}

/// Per-neuron activation-flip probabilities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlipProbBounds {
    /// `P(sign(w·x) ≠ sign(w·(x+δ))) ≤ R√(2 log d/d) + 1/d` for `‖δ‖ ≤ R`.
    pub single: f64,
    /// `P(∃δ', ‖δ−δ'‖ ≤ ε, sign flips between x+δ and x+δ') ≤ 2ε(1 + 2√(log(2/ε)/d))`.
    pub ball: f64,
}

pub fn flip_prob_single(radius: f64, d: f64) -> Result<f64> {
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::Domain(format!("R must be non-negative, got {radius}")));
    }
    check_at_least_one("d", d)?;
    Ok(radius * (2.0 * d.ln() / d).sqrt() + 1.0 / d)
}

pub fn flip_prob_ball(radius: f64, d: f64, epsilon: f64) -> Result<f64> {
    check_at_least_one("d", d)?;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    if !(radius >= 0.0 && radius <= d.sqrt() / 2.0) {
        return Err(Error::Domain(format!(
            "ball variant needs 0 ≤ R ≤ √d/2, got R={radius}, d={d}"
        )));
    }
    Ok(2.0 * epsilon * (1.0 + 2.0 * ((2.0 / epsilon).ln() / d).sqrt()))
}

pub fn flip_prob_bounds(radius: f64, d: f64, epsilon: f64) -> Result<FlipProbBounds> {
    Ok(FlipProbBounds {
        single: flip_prob_single(radius, d)?,
        ball: flip_prob_ball(radius, d, epsilon)?,
    })
}

/// Bound on `Φ(v, δ) = (1/√k) Σ aₗ (wₗ·v)(ψ'(wₗ·x) − ψ'(wₗ·(x+δ)))` for one
/// fixed unit `v` and `‖δ‖ ≤ R`.
///
/// Smooth: `(4RL/d)√(log(1/γ))(1 + √(log(1/γ)/k))`;
/// ReLU (`R ≥ 1`): `2√(log(1/γ)/d)((2R√(log d/d))^{1/4} + √(log(1/γ)/k))`.
/// `lipschitz` is ignored for ReLU.
pub fn per_sample_grad_dev_bound(
    activation: Activation,
    radius: f64,
    d: f64,
    k: f64,
    gamma: f64,
    lipschitz: f64,
) -> Result<f64> {
    check_gamma(gamma)?;
    check_at_least_one("d", d)?;
    check_at_least_one("k", k)?;
    let l = log_inv(gamma);
    match activation {
        Activation::Tanh => {
            if !(radius.is_finite() && radius >= 0.0) {
                return Err(Error::Domain(format!("R must be non-negative, got {radius}")));
            }
            if !(lipschitz.is_finite() && lipschitz >= 0.0) {
                return Err(Error::Domain(format!("L must be non-negative, got {lipschitz}")));
            }
            Ok(4.0 * radius * lipschitz / d * l.sqrt() * (1.0 + (l / k).sqrt()))
        }
        Activation::Relu => {
            check_at_least_one("R", radius)?;
            let micro = (2.0 * radius * (d.ln() / d).sqrt()).powf(0.25);
            Ok(2.0 * (l / d).sqrt() * (micro + (l / k).sqrt()))
        }
    }
}

/// Step magnitude `|η| = C₃√(log(1/γ))` for a caller-chosen constant `C₃`.
pub fn theorem_eta(gamma: f64, c3: f64) -> Result<f64> {
    check_gamma(gamma)?;
    check_positive("c3", c3)?;
    Ok(c3 * log_inv(gamma).sqrt())
}
