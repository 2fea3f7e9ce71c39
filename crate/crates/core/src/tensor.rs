//! Dense row-major matrices of `f64`.
//!
//! Every value in the engine is a rank-2 tensor; vectors are `1 × n` rows.
//! A batch of state vectors is stored as `B × n`, one sample per row.
//!
//! # Broadcasting
//!
//! Binary elementwise operations accept two operands when one of them has
//! the result shape and the other is either a `1 × c` row (repeated down the
//! rows) or an `r × 1` column (repeated across the columns). Anything else,
//! including outer-product style `r × 1` against `1 × c`, is a shape error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Mismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("buffer of length {len} cannot hold a {rows}x{cols} tensor")]
    Length {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("{op}: {detail}")]
    Invalid { op: &'static str, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        if data.len() != rows * cols {
            return Err(ShapeError::Length {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled(1, 1, value)
    }

    /// A `1 × n` row vector.
    pub fn row(values: Vec<f64>) -> Self {
        Tensor {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    /// An `n × 1` column vector.
    pub fn column(values: Vec<f64>) -> Self {
        Tensor {
            rows: values.len(),
            cols: 1,
            data: values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ShapeError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(ShapeError::Invalid {
                    op: "from_rows",
                    detail: format!("ragged rows: expected {cols} columns, found {}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Tensor::new(rows.len(), cols, data)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single entry of a `1 × 1` tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn reshaped(&self, rows: usize, cols: usize) -> Result<Tensor, ShapeError> {
        Tensor::new(rows, cols, self.data.clone())
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor, ShapeError> {
        if self.cols != rhs.rows {
            return Err(ShapeError::Mismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let (n, k, m) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![0.0; n * m];
        // i-k-j order keeps the inner loop contiguous in both rhs and out.
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let lhs = self.data[i * k + p];
                if lhs == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[p * m..(p + 1) * m];
                for (o, &r) in out_row.iter_mut().zip(rhs_row) {
                    *o += lhs * r;
                }
            }
        }
        Ok(Tensor {
            rows: n,
            cols: m,
            data: out,
        })
    }

    /// Elementwise combination under the broadcasting rules in the module docs.
    pub fn zip_with(
        &self,
        rhs: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, ShapeError> {
        let (rows, cols) = broadcast_shape(op, self.shape(), rhs.shape())?;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(self.at_broadcast(r, c), rhs.at_broadcast(r, c)));
            }
        }
        Ok(Tensor { rows, cols, data })
    }

    #[inline]
    fn at_broadcast(&self, r: usize, c: usize) -> f64 {
        let r = if self.rows == 1 { 0 } else { r };
        let c = if self.cols == 1 { 0 } else { c };
        self.data[r * self.cols + c]
    }

    /// Sums a gradient of shape `self.shape()`-compatible broadcast result back
    /// down to `(rows, cols)`.
    pub(crate) fn reduce_to(&self, rows: usize, cols: usize) -> Tensor {
        if self.shape() == (rows, cols) {
            return self.clone();
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let rr = if rows == 1 { 0 } else { r };
                let cc = if cols == 1 { 0 } else { c };
                out.data[rr * cols + cc] += self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor, ShapeError> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor, ShapeError> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor, ShapeError> {
        self.zip_with(rhs, "mul", |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Result shape of a broadcasting binary op, see the module docs.
pub fn broadcast_shape(
    op: &'static str,
    lhs: (usize, usize),
    rhs: (usize, usize),
) -> Result<(usize, usize), ShapeError> {
    if lhs == rhs {
        return Ok(lhs);
    }
    let expands = |small: (usize, usize), big: (usize, usize)| {
        (small.0 == 1 && small.1 == big.1) || (small.1 == 1 && small.0 == big.0)
    };
    if expands(rhs, lhs) {
        Ok(lhs)
    } else if expands(lhs, rhs) {
        Ok(rhs)
    } else {
        Err(ShapeError::Mismatch { op, lhs, rhs })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
