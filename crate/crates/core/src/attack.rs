//! Gradient-step attacks on the sign of `f`.
//!
//! The step is always taken against the current sign: `η = −sign(f(x))·|η|`,
//! with `sign(0) = +1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, norm};
use crate::network::{point_along, Network};

/// Gradients shorter than this make the step direction undefined.
pub const MIN_GRADIENT_NORM: f64 = 1e-12;
pub const DEFAULT_ETA_MAX: f64 = 20.0;
pub const DEFAULT_GRID: usize = 400;
pub const BISECTION_STEPS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub eta: f64,
    pub perturbation_norm: f64,
    pub value_before: f64,
    pub value_after: f64,
    pub flipped: bool,
}

#[inline]
pub fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
pub fn sign_changed(before: f64, after: f64) -> bool {
    sign(before) != sign(after)
}

fn checked_gradient(net: &Network, x: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
    let (value, grad) = net.value_and_gradient(x)?;
    let gn = norm(&grad);
    if gn.is_nan() || gn < MIN_GRADIENT_NORM {
        return Err(Error::ZeroGradient(gn));
    }
    Ok((value, grad, gn))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// One step `x + η∇f(x)` with `|η| = eta_magnitude`.
pub fn single_step_attack(net: &Network, x: &[f64], eta_magnitude: f64) -> Result<AttackOutcome> {
    positive("eta_magnitude", eta_magnitude)?;
    let (before, grad, gn) = checked_gradient(net, x)?;
    let eta = -sign(before) * eta_magnitude;
    let after = net.forward(&point_along(x, &grad, eta))?;
    Ok(AttackOutcome {
        eta,
        perturbation_norm: eta_magnitude * gn,
        value_before: before,
        value_after: after,
        flipped: sign_changed(before, after),
    })
}

/// Smallest `|η| ≤ eta_max` whose gradient step flips the sign of `f`.
///
/// Scans `grid` evenly spaced magnitudes in `(0, eta_max]`, then bisects 40
/// times between the last non-flipping and the first flipping grid point.
/// `f` need not be monotone along the ray, so this is the smallest
/// grid-bracketed flip rather than the global infimum. The returned value is
/// signed (`sign(η) = −sign(f(x))`) and flips under a direct forward pass.
pub fn smallest_flip_eta(net: &Network, x: &[f64], eta_max: f64, grid: usize) -> Result<Option<f64>> {
    let (before, grad, _) = checked_gradient(net, x)?;
    search_flip_along(net, x, &grad, before, eta_max, grid)
}

/// Grid-and-bisection search for the first sign change of `t ↦ f(x + s·t·dir)`,
/// `s = −sign(f(x))`, over `t ∈ (0, eta_max]`. Returns `s·t`.
pub fn search_flip_along(
    net: &Network,
    x: &[f64],
    dir: &[f64],
    value_at_x: f64,
    eta_max: f64,
    grid: usize,
) -> Result<Option<f64>> {
    positive("eta_max", eta_max)?;
    if grid < 2 {
        return Err(Error::InvalidArgument(format!("grid must be at least 2, got {grid}")));
    }
    let s = -sign(value_at_x);
    let ray = net.ray(x, dir)?;
    let flips_at = |t: f64| sign_changed(value_at_x, ray.value(s * t));

    let mut lo = 0.0;
    let mut hi = None;
    for i in 1..=grid {
        let t = eta_max * i as f64 / grid as f64;
        if flips_at(t) {
            hi = Some(t);
            break;
        }
        lo = t;
    }
    let Some(grid_hi) = hi else {
        return Ok(None);
    };
    let mut hi = grid_hi;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if flips_at(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    // The ray evaluates the first layer incrementally; near the root the two
    // evaluation orders can disagree in the last bits, so confirm directly and
    // back off towards the grid point if needed.
    let flips_direct =
        |t: f64| -> Result<bool> { Ok(sign_changed(value_at_x, net.forward(&point_along(x, dir, s * t))?)) };
    let mut step = (hi - lo).max(f64::EPSILON * hi);
    while !flips_direct(hi)? {
        if hi >= grid_hi {
            hi = grid_hi;
            break;
        }
        hi = (hi + step).min(grid_hi);
        step *= 2.0;
    }
    Ok(Some(s * hi))
}

/// `(1/√k) Σₗ aₗ wₗ`, an input-independent step direction for depth-1 networks.
pub fn universal_direction(net: &Network) -> Result<Vec<f64>> {
    if net.depth() != 1 {
        return Err(Error::Unsupported(format!(
            "universal direction requires depth 1, network has depth {}",
            net.depth()
        )));
    }
    let mut u = net.layers()[0].matvec_t(net.output_signs());
    let scale = net.output_scale();
    u.iter_mut().for_each(|v| *v *= scale);
    Ok(u)
}

/// Smallest flipping step along `±universal_direction`, searched like
/// [`smallest_flip_eta`] with the sign set against `f(x)`.
pub fn universal_flip_eta(net: &Network, x: &[f64], eta_max: f64, grid: usize) -> Result<Option<f64>> {
    let u = universal_direction(net)?;
    let before = net.forward(x)?;
    search_flip_along(net, x, &u, before, eta_max, grid)
}

/// Iterates of the normalised multi-step attack.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub steps: Vec<AttackOutcome>,
    #[serde(skip)]
    pub final_point: Vec<f64>,
    /// The gradient vanished before a flip or the step budget ran out.
    pub stopped_on_zero_gradient: bool,
}

impl Trajectory {
    pub fn flipped(&self) -> bool {
        self.steps.last().is_some_and(|s| s.flipped)
    }
}

/// `x_{t+1} = x_t − sign(f(x_0))·step_size·∇f(x_t)/‖∇f(x_t)‖` until the sign
/// of `f` changes or `max_steps` steps are taken.
///
/// Each recorded outcome describes one step; `flipped` is relative to `f(x_0)`.
pub fn multi_step_attack(net: &Network, x: &[f64], step_size: f64, max_steps: usize) -> Result<Trajectory> {
    positive("step_size", step_size)?;
    if max_steps == 0 {
        return Err(Error::InvalidArgument("max_steps must be at least 1".into()));
    }
    let (start, mut grad, mut gn) = checked_gradient(net, x)?;
    let s = -sign(start);
    let mut current = x.to_vec();
    let mut value = start;
    let mut steps = Vec::new();
    let mut stopped_on_zero_gradient = false;
    loop {
        let eta = s * step_size / gn;
        linalg::axpy(eta, &grad, &mut current);
        let after = net.forward(&current)?;
        let flipped = sign_changed(start, after);
        steps.push(AttackOutcome {
            eta,
            perturbation_norm: eta.abs() * gn,
            value_before: value,
            value_after: after,
            flipped,
        });
        if flipped || steps.len() == max_steps {
            break;
        }
        let (v, g) = net.value_and_gradient(&current)?;
        value = v;
        gn = norm(&g);
        grad = g;
        if gn.is_nan() || gn < MIN_GRADIENT_NORM {
            stopped_on_zero_gradient = true;
            break;
        }
    }
    Ok(Trajectory {
        steps,
        final_point: current,
        stopped_on_zero_gradient,
    })
}
