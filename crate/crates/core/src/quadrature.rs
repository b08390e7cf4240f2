//! Gauss–Hermite quadrature for expectations under the standard normal law.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Node count used for activation moments.
pub const DEFAULT_NODES: usize = 128;

/// Nodes and weights for `∫ e^{-x²} g(x) dx ≈ Σ wᵢ g(xᵢ)`.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Newton iteration on orthonormal Hermite polynomials, seeded with the
    /// classical asymptotic guesses for the largest roots.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        const EPS: f64 = 1e-14;
        const MAX_ITER: usize = 100;
        let pim4 = PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..MAX_ITER {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= EPS * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            let w = 2.0 / (pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[g(X)]` for `X ~ N(0, 1)`.
    pub fn gaussian_expectation(&self, g: impl Fn(f64) -> f64) -> f64 {
        let s2 = std::f64::consts::SQRT_2;
        let sum: f64 = self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * g(s2 * x)).sum();
        sum / PI.sqrt()
    }
}

/// Shared 128-node rule.
pub fn default_rule() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(DEFAULT_NODES))
}
