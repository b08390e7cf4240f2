//! Dense row-major matrices and the handful of vector kernels the models need.
//!
//! Single matrix-vector products use fixed-order loops so results do not depend
//! on the CPU; batched products go through `matrixmultiply`.

use serde::{Deserialize, Serialize};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// `self · x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.row_iter().map(|r| dot(r, x)).collect()
    }

    /// `selfᵀ · y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &c) in self.row_iter().zip(y) {
            if c != 0.0 {
                axpy(c, r, &mut out);
            }
        }
        out
    }

    /// `self · B` where `B` is `cols × n` row-major; returns `rows × n` row-major.
    pub fn matmul(&self, b: &[f64], n: usize) -> Vec<f64> {
        assert_eq!(b.len(), self.cols * n);
        let mut out = vec![0.0; self.rows * n];
        if out.is_empty() || self.cols == 0 {
            return out;
        }
        // SAFETY: extents and strides describe the three buffers exactly.
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                n,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                b.as_ptr(),
                n as isize,
                1,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        out
    }

    /// `selfᵀ · C` where `C` is `rows × n` row-major; returns `cols × n` row-major.
    pub fn matmul_t(&self, c: &[f64], n: usize) -> Vec<f64> {
        assert_eq!(c.len(), self.rows * n);
        let mut out = vec![0.0; self.cols * n];
        if out.is_empty() || self.rows == 0 {
            return out;
        }
        // SAFETY: selfᵀ is read through swapped strides; extents match.
        unsafe {
            matrixmultiply::dgemm(
                self.cols,
                self.rows,
                n,
                1.0,
                self.data.as_ptr(),
                1,
                self.cols as isize,
                c.as_ptr(),
                n as isize,
                1,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        out
    }

    /// Sum of squared entries.
    pub fn frobenius_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }
}

/// Euclidean norms of the columns of a `rows × n` row-major buffer.
pub fn column_norms(buf: &[f64], rows: usize, n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n];
    for r in 0..rows {
        for (a, v) in acc.iter_mut().zip(&buf[r * n..(r + 1) * n]) {
            *a += v * v;
        }
    }
    acc.into_iter().map(f64::sqrt).collect()
}
