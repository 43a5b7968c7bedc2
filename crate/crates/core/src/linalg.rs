//! Dense row-major matrices and the handful of vector helpers the networks need.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Row-major dense matrix.
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

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            check_dim(cols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `M·x + bias` (bias may be empty for no offset).
    pub fn mul_vec_add(&self, x: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, x.len())?;
        if !bias.is_empty() {
            check_dim(self.rows, bias.len())?;
        }
        Ok((0..self.rows)
            .map(|r| {
                let acc = dot(self.row(r), x);
                if bias.is_empty() {
                    acc
                } else {
                    acc + bias[r]
                }
            })
            .collect())
    }

    /// `|M|·x` with the element-wise absolute value of the matrix.
    pub fn abs_mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, x.len())?;
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(w, v)| w.abs() * v).sum())
            .collect())
    }

    /// `Mᵀ·y`.
    pub fn transpose_mul_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.rows, y.len())?;
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
        Ok(out)
    }

    /// `|M|ᵀ·y`.
    pub fn abs_transpose_mul_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.rows, y.len())?;
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += w.abs() * yr;
            }
        }
        Ok(out)
    }

    /// Induced ∞-norm: the largest absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|w| w.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_match_hand_values() {
        let m = Matrix::from_rows(&[vec![1.0, -2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.mul_vec_add(&[1.0, 1.0], &[0.5, 0.0]).unwrap(), vec![-0.5, 7.0]);
        assert_eq!(m.abs_mul_vec(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
        assert_eq!(m.transpose_mul_vec(&[1.0, 1.0]).unwrap(), vec![4.0, 2.0]);
        assert_eq!(m.abs_transpose_mul_vec(&[1.0, 1.0]).unwrap(), vec![4.0, 6.0]);
        assert_eq!(m.inf_norm(), 7.0);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Matrix::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
