//! Random fully connected networks
//! `f(x) = (1/√k) Σₗ aₗ · h_L(x)ₗ`, where `h_0 = x` and `h_j = ψ(W_j h_{j-1})`.
//!
//! Hidden weights are i.i.d. `N(0, 1/fan_in)` and the output signs `aₗ` are
//! uniform on `{-1, +1}`. Depth 1 is the classical two-layer model.

use std::io::{Read, Write};
use std::ops::Deref;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{self, tag};

const DUMP_MAGIC: &[u8; 8] = b"ADVLNET\0";
const DUMP_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    activation: Activation,
    input_dim: usize,
    hidden_width: usize,
    layers: Vec<Matrix>,
    output_signs: Vec<f64>,
    seed: u64,
}

/// A point on the sphere of radius `√d`.
#[derive(Clone, Debug, PartialEq)]
pub struct InputPoint(Vec<f64>);

impl InputPoint {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for InputPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Uniform point on `√d · S^{d-1}`: a Gaussian vector rescaled to norm `√d`.
pub fn sample_input(d: usize, seed: u64) -> Result<InputPoint> {
    if d == 0 {
        return Err(Error::InvalidDims("input dimension must be positive".into()));
    }
    let mut r = rng::stream(seed, &[tag::INPUT]);
    let mut v = rng::unit_vector(&mut r, d);
    let radius = (d as f64).sqrt();
    v.iter_mut().for_each(|x| *x *= radius);
    Ok(InputPoint(v))
}

impl Network {
    pub fn sample(
        depth: usize,
        input_dim: usize,
        hidden_width: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        if depth == 0 || input_dim == 0 || hidden_width == 0 {
            return Err(Error::InvalidDims(format!(
                "depth={depth}, d={input_dim}, k={hidden_width}; all must be positive"
            )));
        }
        let mut layers = Vec::with_capacity(depth);
        for j in 0..depth {
            let fan_in = if j == 0 { input_dim } else { hidden_width };
            let mut w = Matrix::zeros(hidden_width, fan_in);
            let mut r = rng::stream(seed, &[tag::LAYER, j as u64]);
            rng::fill_normal(&mut r, w.as_mut_slice(), (fan_in as f64).sqrt().recip());
            layers.push(w);
        }
        let mut r = rng::stream(seed, &[tag::SIGNS]);
        let output_signs = (0..hidden_width).map(|_| rng::rademacher(&mut r)).collect();
        Ok(Self {
            activation,
            input_dim,
            hidden_width,
            layers,
            output_signs,
            seed,
        })
    }

    /// Builds a network from explicit weights; used for hand-made cases.
    pub fn from_parts(activation: Activation, layers: Vec<Matrix>, output_signs: Vec<f64>, seed: u64) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::InvalidDims("no layers".into()))?;
        let (k, d) = (first.rows(), first.cols());
        if k == 0 || d == 0 {
            return Err(Error::InvalidDims("empty first layer".into()));
        }
        for (j, w) in layers.iter().enumerate().skip(1) {
            if w.rows() != k || w.cols() != k {
                return Err(Error::InvalidDims(format!(
                    "layer {j} is {}x{}, expected {k}x{k}",
                    w.rows(),
                    w.cols()
                )));
            }
        }
        if output_signs.len() != k {
            return Err(Error::DimMismatch {
                expected: k,
                got: output_signs.len(),
            });
        }
        if output_signs.iter().any(|&a| a != 1.0 && a != -1.0) {
            return Err(Error::InvalidArgument("output signs must be exactly ±1".into()));
        }
        Ok(Self {
            activation,
            input_dim: d,
            hidden_width: k,
            layers,
            output_signs,
            seed,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden_width
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn output_signs(&self) -> &[f64] {
        &self.output_signs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `1/√k`
    pub fn output_scale(&self) -> f64 {
        (self.hidden_width as f64).sqrt().recip()
    }

    /// Same weights with every output sign flipped, i.e. `-f`.
    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        out.output_signs.iter_mut().for_each(|a| *a = -*a);
        out
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn require_depth_one(&self, what: &str) -> Result<()> {
        if self.depth() != 1 {
            return Err(Error::Unsupported(format!(
                "{what} requires depth 1, network has depth {}",
                self.depth()
            )));
        }
        Ok(())
    }

    pub(crate) fn require_smooth(&self) -> Result<()> {
        if !self.activation.is_smooth() {
            return Err(Error::NotSmooth(self.activation.name()));
        }
        Ok(())
    }

    /// First-layer pre-activations `W_1 x`.
    pub fn preactivations(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.layers[0].matvec(x))
    }

    /// Finishes a forward pass from first-layer pre-activations.
    fn value_from_first(&self, mut z: Vec<f64>) -> f64 {
        let act = self.activation;
        for w in &self.layers[1..] {
            z.iter_mut().for_each(|v| *v = act.eval(*v));
            z = w.matvec(&z);
        }
        let s: f64 = z.iter().zip(&self.output_signs).map(|(&v, &a)| a * act.eval(v)).sum();
        s * self.output_scale()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        let z = self.preactivations(x)?;
        Ok(self.value_from_first(z))
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_gradient(x)?.1)
    }

    /// `f(x)` and `∇f(x)` by one forward and one reverse sweep.
    pub fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        let act = self.activation;
        let mut pre = Vec::with_capacity(self.depth());
        pre.push(self.layers[0].matvec(x));
        for w in &self.layers[1..] {
            let h: Vec<f64> = pre.last().unwrap().iter().map(|&v| act.eval(v)).collect();
            pre.push(w.matvec(&h));
        }
        let scale = self.output_scale();
        let last = pre.last().unwrap();
        let value = scale
            * last
                .iter()
                .zip(&self.output_signs)
                .map(|(&v, &a)| a * act.eval(v))
                .sum::<f64>();
        let mut g: Vec<f64> = last
            .iter()
            .zip(&self.output_signs)
            .map(|(&v, &a)| scale * a * act.deriv(v))
            .collect();
        for j in (1..self.depth()).rev() {
            let back = self.layers[j].matvec_t(&g);
            g = back.iter().zip(&pre[j - 1]).map(|(&b, &v)| b * act.deriv(v)).collect();
        }
        Ok((value, self.layers[0].matvec_t(&g)))
    }

    /// `∇²f(x) · u` for depth-1 smooth networks, without forming the Hessian.
    pub fn hessian_vector_product(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.hessian_at(x)?.apply(u)
    }

    /// Caches `ψ''(wₗ·x)` so repeated Hessian products cost two mat-vecs each.
    pub fn hessian_at(&self, x: &[f64]) -> Result<Hessian<'_>> {
        self.require_smooth()?;
        self.require_depth_one("hessian_vector_product")?;
        let z = self.preactivations(x)?;
        let scale = self.output_scale();
        let mut coeffs = Vec::with_capacity(z.len());
        for (&v, &a) in z.iter().zip(&self.output_signs) {
            coeffs.push(scale * a * self.activation.second_deriv(v)?);
        }
        Ok(Hessian { net: self, coeffs })
    }

    /// The map `t ↦ f(x + t·dir)`, with the first layer evaluated incrementally.
    pub fn ray(&self, x: &[f64], dir: &[f64]) -> Result<Ray<'_>> {
        self.check_input(x)?;
        self.check_input(dir)?;
        Ok(Ray {
            net: self,
            base: self.layers[0].matvec(x),
            slope: self.layers[0].matvec(dir),
        })
    }

    /// Writes the little-endian binary dump.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&DUMP_VERSION.to_le_bytes())?;
        out.write_all(&(self.depth() as u32).to_le_bytes())?;
        out.write_all(&(self.input_dim as u64).to_le_bytes())?;
        out.write_all(&(self.hidden_width as u64).to_le_bytes())?;
        out.write_all(&self.activation.id().to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * self.hidden_width * self.input_dim.max(self.hidden_width));
        for w in &self.layers {
            buf.clear();
            for v in w.as_slice() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        for a in &self.output_signs {
            out.write_all(&a.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Parse("not a network dump (bad magic)".into()));
        }
        let version = read_u32(&mut input)?;
        if version != DUMP_VERSION {
            return Err(Error::Parse(format!("unsupported dump version {version}")));
        }
        let depth = read_u32(&mut input)? as usize;
        let d = read_u64(&mut input)? as usize;
        let k = read_u64(&mut input)? as usize;
        let act_id = read_u32(&mut input)?;
        let activation =
            Activation::from_id(act_id).ok_or_else(|| Error::Parse(format!("unknown activation id {act_id}")))?;
        let seed = read_u64(&mut input)?;
        if depth == 0 || d == 0 || k == 0 {
            return Err(Error::Parse("zero dimension in dump header".into()));
        }
        let mut layers = Vec::with_capacity(depth);
        for j in 0..depth {
            let cols = if j == 0 { d } else { k };
            layers.push(Matrix::from_vec(k, cols, read_f64s(&mut input, k * cols)?));
        }
        let signs = read_f64s(&mut input, k)?;
        Self::from_parts(activation, layers, signs, seed)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; 8 * n];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Hessian of a depth-1 smooth network at a fixed point.
pub struct Hessian<'a> {
    net: &'a Network,
    coeffs: Vec<f64>,
}

impl Hessian<'_> {
    pub fn dim(&self) -> usize {
        self.net.input_dim
    }

    /// `Σₗ cₗ (wₗ·u) wₗ` with `cₗ = aₗ ψ''(wₗ·x)/√k`.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.net.check_input(u)?;
        let w = &self.net.layers[0];
        let mut s = w.matvec(u);
        s.iter_mut().zip(&self.coeffs).for_each(|(v, c)| *v *= c);
        Ok(w.matvec_t(&s))
    }

    /// Dense `d × d` Hessian. Only sensible for small `d`.
    pub fn to_dense(&self) -> Matrix {
        let d = self.dim();
        let w = &self.net.layers[0];
        let mut out = Matrix::zeros(d, d);
        for (row, &c) in w.row_iter().zip(&self.coeffs) {
            let m = out.as_mut_slice();
            for i in 0..d {
                let ci = c * row[i];
                for j in 0..d {
                    m[i * d + j] += ci * row[j];
                }
            }
        }
        out
    }
}

/// `t ↦ f(x + t·dir)`.
pub struct Ray<'a> {
    net: &'a Network,
    base: Vec<f64>,
    slope: Vec<f64>,
}

impl Ray<'_> {
    pub fn value(&self, t: f64) -> f64 {
        let z = self.first_layer(t);
        self.net.value_from_first(z)
    }

    /// `W_1 (x + t·dir)` computed as `W_1 x + t · W_1 dir`.
    pub fn first_layer(&self, t: f64) -> Vec<f64> {
        self.base.iter().zip(&self.slope).map(|(&b, &s)| b + t * s).collect()
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn slope(&self) -> &[f64] {
        &self.slope
    }
}

/// `x + t·dir`
pub fn point_along(x: &[f64], dir: &[f64], t: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    linalg::axpy(t, dir, &mut y);
    y
}
