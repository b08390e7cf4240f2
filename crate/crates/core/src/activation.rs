//! Scalar activations with exact derivatives and Gaussian moments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// `max |tanh''|`, attained at `t = ±atanh(1/√3)`.
pub const TANH_DERIVATIVE_LIPSCHITZ: f64 = 0.769_800_358_919_501;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 2] = [Activation::Relu, Activation::Tanh];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    /// Stable numeric id used in binary network dumps.
    pub fn id(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    pub fn is_smooth(self) -> bool {
        matches!(self, Activation::Tanh)
    }

    /// Lipschitz constant of the derivative; `None` for kinked activations.
    pub fn lipschitz_of_derivative(self) -> Option<f64> {
        match self {
            Activation::Relu => None,
            Activation::Tanh => Some(TANH_DERIVATIVE_LIPSCHITZ),
        }
    }

    #[inline]
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Activation::Relu => t.max(0.0),
            Activation::Tanh => t.tanh(),
        }
    }

    /// First derivative. ReLU uses the convention `ψ'(0) = 0`.
    #[inline]
    pub fn deriv(self, t: f64) -> f64 {
        match self {
            Activation::Relu => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let th = t.tanh();
                1.0 - th * th
            }
        }
    }

    pub fn second_deriv(self, t: f64) -> Result<f64> {
        match self {
            Activation::Relu => Err(Error::NotSmooth(self.name())),
            Activation::Tanh => {
                let th = t.tanh();
                Ok(-2.0 * th * (1.0 - th * th))
            }
        }
    }

    /// `E[ψ^{(j)}(X)^p]` for `X ~ N(0,1)`, `j ∈ {0, 1}`, `1 ≤ p ≤ 8`.
    ///
    /// ReLU moments use closed forms; smooth kinds use the 128-node
    /// Gauss–Hermite rule.
    pub fn gaussian_moment(self, derivative_order: u32, power: u32) -> Result<f64> {
        if power == 0 || power > 8 {
            return Err(Error::UnsupportedPower(power));
        }
        if derivative_order > 1 {
            return Err(Error::InvalidArgument(format!(
                "derivative order must be 0 or 1, got {derivative_order}"
            )));
        }
        let p = power as i32;
        Ok(match (self, derivative_order) {
            (Activation::Relu, 0) => 0.5 * abs_normal_moment(power),
            (Activation::Relu, _) => 0.5,
            (Activation::Tanh, 0) => quadrature::default_rule().gaussian_expectation(|x| x.tanh().powi(p)),
            (Activation::Tanh, _) => {
                quadrature::default_rule().gaussian_expectation(|x| Activation::Tanh.deriv(x).powi(p))
            }
        })
    }
}

/// `E|X|^p` for a standard normal `X`.
fn abs_normal_moment(p: u32) -> f64 {
    let (mut m, start) = if p.is_multiple_of(2) {
        (1.0, 2)
    } else {
        ((2.0 / std::f64::consts::PI).sqrt(), 3)
    };
    let mut q = start;
    while q <= p {
        m *= f64::from(q - 1);
        q += 2;
    }
    m
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Parse(format!(
                "unknown activation `{other}` (expected relu or tanh)"
            ))),
        }
    }
}
