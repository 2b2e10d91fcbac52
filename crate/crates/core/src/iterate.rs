//! Scenario-indexed decision matrices.
//!
//! An [`IterateMatrix`] stores one decision vector per scenario as a dense,
//! row-major `S × n` block. The algorithms use several of them side by side
//! (the projected point `x`, the prox outputs `ŷ`, the global splitting
//! variable `z`, the dual `w`), so the type carries no role of its own.

use serde::{Deserialize, Serialize};

use crate::error::StructureError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl IterateMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds a matrix from row vectors. All rows must have the same length
    /// and every entry must be finite.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, StructureError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(StructureError::RaggedRows { row: s, expected: cols, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, StructureError> {
        if data.len() != rows * cols {
            return Err(StructureError::DimensionMismatch {
                expected: (rows, cols),
                found: (data.len(), 1),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(StructureError::NonFinite { row: pos / cols.max(1), col: pos % cols.max(1) });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.cols..(s + 1) * self.cols]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.data[s * self.cols..(s + 1) * self.cols]
    }

    pub fn set_row(&mut self, s: usize, values: &[f64]) {
        self.row_mut(s).copy_from_slice(values);
    }

    pub fn get(&self, s: usize, j: usize) -> f64 {
        self.data[s * self.cols + j]
    }

    pub fn set(&mut self, s: usize, j: usize, value: f64) {
        self.data[s * self.cols + j] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).take(self.rows).map(<[f64]>::to_vec).collect()
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |s| self.row(s))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_dims(&self, rows: usize, cols: usize) -> Result<(), StructureError> {
        if self.rows != rows || self.cols != cols {
            return Err(StructureError::DimensionMismatch { expected: (rows, cols), found: self.dims() });
        }
        Ok(())
    }

    /// Entrywise `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self, StructureError> {
        other.check_dims(self.rows, self.cols)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    /// Entrywise `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Result<Self, StructureError> {
        other.check_dims(self.rows, self.cols)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + alpha * b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| alpha * v).collect() }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise absolute difference; `f64::INFINITY` on a shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.dims() != other.dims() {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}
