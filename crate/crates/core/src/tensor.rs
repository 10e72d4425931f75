//! Flat row-major tensors and the row reductions used by the priority engine.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("shape has a zero dimension ({channels}x{height}x{width})")]
    EmptyShape {
        channels: u32,
        height: u32,
        width: u32,
    },
    #[error("matrix data length {len} does not match {rows}x{cols}")]
    LengthMismatch { rows: usize, cols: usize, len: usize },
    #[error("cannot split {cols} columns into {parts} equal parts")]
    Indivisible { cols: usize, parts: usize },
}

/// Latent tensor geometry `(C, H, W)`; flat index is `(c * H + h) * W + w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: u32,
    pub height: u32,
    pub width: u32,
}

impl Shape {
    pub fn new(channels: u32, height: u32, width: u32) -> Result<Self, TensorError> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(TensorError::EmptyShape {
                channels,
                height,
                width,
            });
        }
        Ok(Shape {
            channels,
            height,
            width,
        })
    }

    /// Number of elements `K`.
    pub fn len(&self) -> usize {
        self.channels as usize * self.height as usize * self.width as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, c: u32, h: u32, w: u32) -> usize {
        debug_assert!(c < self.channels && h < self.height && w < self.width);
        (c as usize * self.height as usize + h as usize) * self.width as usize + w as usize
    }

    pub fn coords(&self, index: usize) -> (u32, u32, u32) {
        let w = index % self.width as usize;
        let rest = index / self.width as usize;
        let h = rest % self.height as usize;
        let c = rest / self.height as usize;
        (c as u32, h as u32, w as u32)
    }
}

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, TensorError> {
        if values.len() != rows * cols {
            return Err(TensorError::LengthMismatch {
                rows,
                cols,
                len: values.len(),
            });
        }
        Ok(Matrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(TensorError::LengthMismatch {
                    rows: rows.len(),
                    cols,
                    len: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    /// Hadamard product with a single row broadcast over every row.
    pub fn mul_row_broadcast(&self, row: &[f64]) -> Matrix {
        assert_eq!(row.len(), self.cols, "broadcast row length");
        let mut out = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            out.extend(self.row(r).iter().zip(row).map(|(a, b)| a * b));
        }
        Matrix {
            rows: self.rows,
            cols: self.cols,
            values: out,
        }
    }
}

/// `Σr`: sums each row left to right, giving an `N x 1` matrix.
pub fn row_sum(a: &Matrix) -> Matrix {
    let values = (0..a.rows).map(|r| sequential_sum(a.row(r))).collect();
    Matrix {
        rows: a.rows,
        cols: 1,
        values,
    }
}

/// Splits every row into `parts` equal contiguous blocks and sums each block.
pub fn partition_row_sum(a: &Matrix, parts: usize) -> Result<Matrix, TensorError> {
    if parts == 0 || !a.cols.is_multiple_of(parts) {
        return Err(TensorError::Indivisible {
            cols: a.cols,
            parts,
        });
    }
    let block = a.cols / parts;
    let mut values = Vec::with_capacity(a.rows * parts);
    for r in 0..a.rows {
        values.extend(a.row(r).chunks_exact(block).map(sequential_sum));
    }
    Ok(Matrix {
        rows: a.rows,
        cols: parts,
        values,
    })
}

/// `Σr³`: the trisecting row sum.
pub fn trisect_row_sum(a: &Matrix) -> Result<Matrix, TensorError> {
    partition_row_sum(a, 3)
}

/// Bit-plane analogue of [`trisect_row_sum`].
pub fn bisect_row_sum(a: &Matrix) -> Result<Matrix, TensorError> {
    partition_row_sum(a, 2)
}

/// Plain left-to-right accumulation. Every reduction in the crate goes through
/// here so that scalar and matrix code paths agree bit for bit.
#[inline]
pub fn sequential_sum(xs: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &x in xs {
        acc += x;
    }
    acc
}
