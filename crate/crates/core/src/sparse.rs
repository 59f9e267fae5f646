//! Coordinate-list sparse matrices.
//!
//! Entries are kept sorted by `(row, col)`, which makes the triplet list a
//! CSR layout in disguise: `row_ptr` is computed once at construction and
//! used for matrix-vector products.

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{FaustError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Triplet>,
    row_ptr: Vec<usize>,
}

impl SparseMatrix {
    /// Builds a sparse matrix from arbitrary-order triplets. Explicit zeros are
    /// dropped; duplicate positions, out-of-range indices and non-finite values
    /// are rejected.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(FaustError::InvalidInput(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        let mut entries = Vec::new();
        for (row, col, value) in triplets {
            if row >= rows || col >= cols {
                return Err(FaustError::InvalidInput(format!(
                    "entry ({row}, {col}) out of bounds for {rows}x{cols} matrix"
                )));
            }
            if !value.is_finite() {
                return Err(FaustError::InvalidInput(format!(
                    "non-finite value at ({row}, {col})"
                )));
            }
            if value != 0.0 {
                entries.push(Triplet { row, col, value });
            }
        }
        entries.sort_by_key(|t| (t.row, t.col));
        if let Some(w) = entries
            .windows(2)
            .find(|w| (w[0].row, w[0].col) == (w[1].row, w[1].col))
        {
            return Err(FaustError::InvalidInput(format!(
                "duplicate entry at ({}, {})",
                w[0].row, w[0].col
            )));
        }
        Ok(Self::from_sorted(rows, cols, entries))
    }

    fn from_sorted(rows: usize, cols: usize, entries: Vec<Triplet>) -> Self {
        let mut row_ptr = vec![0usize; rows + 1];
        for t in &entries {
            row_ptr[t.row + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            rows,
            cols,
            entries,
            row_ptr,
        }
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut entries = Vec::with_capacity(m.nnz());
        for i in 0..m.rows() {
            for (j, &value) in m.row(i).iter().enumerate() {
                if value != 0.0 {
                    entries.push(Triplet { row: i, col: j, value });
                }
            }
        }
        Self::from_sorted(m.rows(), m.cols(), entries)
    }

    /// Matrix with no stored entries.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self::from_sorted(rows, cols, Vec::new())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_sorted(
            n,
            n,
            (0..n)
                .map(|i| Triplet {
                    row: i,
                    col: i,
                    value: 1.0,
                })
                .collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Number of stored (nonzero) entries, i.e. `‖S‖₀`.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Triplet] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let slice = &self.entries[self.row_ptr[row]..self.row_ptr[row + 1]];
        slice
            .binary_search_by_key(&col, |t| t.col)
            .map_or(0.0, |k| slice[k].value)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for t in &self.entries {
            out.set(t.row, t.col, t.value);
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut entries: Vec<Triplet> = self
            .entries
            .iter()
            .map(|t| Triplet {
                row: t.col,
                col: t.row,
                value: t.value,
            })
            .collect();
        entries.sort_by_key(|t| (t.row, t.col));
        Self::from_sorted(self.cols, self.rows, entries)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        if alpha == 0.0 {
            return Self::zeros(self.rows, self.cols);
        }
        let entries = self
            .entries
            .iter()
            .map(|t| Triplet {
                value: t.value * alpha,
                ..*t
            })
            .collect();
        Self::from_sorted(self.rows, self.cols, entries)
    }

    /// `y = S x`. Adds one multiply-add per stored entry to `flops`.
    pub fn mul_vec(&self, x: &[f64], flops: &mut u64) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "sparse mul_vec length mismatch");
        let mut y = vec![0.0; self.rows];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.entries[self.row_ptr[i]..self.row_ptr[i + 1]]
                .iter()
                .map(|t| t.value * x[t.col])
                .sum();
        }
        *flops += self.nnz() as u64;
        y
    }

    /// `y = Sᵀ x`. Adds one multiply-add per stored entry to `flops`.
    pub fn mul_vec_transpose(&self, x: &[f64], flops: &mut u64) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "sparse mul_vec_transpose length mismatch");
        let mut y = vec![0.0; self.cols];
        for t in &self.entries {
            y[t.col] += t.value * x[t.row];
        }
        *flops += self.nnz() as u64;
        y
    }

    /// `S * B` for a dense right operand.
    pub fn mul_dense(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, b.rows(), "sparse mul_dense shape mismatch");
        let n = b.cols();
        let mut out = DenseMatrix::zeros(self.rows, n);
        let data = out.data_mut();
        for t in &self.entries {
            let dst = &mut data[t.row * n..(t.row + 1) * n];
            for (o, v) in dst.iter_mut().zip(b.row(t.col)) {
                *o += t.value * v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_zeros_and_sorts() {
        let s = SparseMatrix::from_triplets(2, 3, [(1, 2, 4.0), (0, 1, 0.0), (0, 0, 1.0)]).unwrap();
        assert_eq!(s.nnz(), 2);
        assert_eq!(s.entries()[0].row, 0);
        assert_eq!(s.get(1, 2), 4.0);
        assert_eq!(s.get(0, 1), 0.0);
    }

    #[test]
    fn rejects_duplicates_and_bounds() {
        assert!(SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0), (0, 0, 2.0)]).is_err());
        assert!(SparseMatrix::from_triplets(2, 2, [(2, 0, 1.0)]).is_err());
        assert!(SparseMatrix::from_triplets(2, 2, [(0, 0, f64::INFINITY)]).is_err());
    }

    #[test]
    fn matvec_matches_dense() {
        let s = SparseMatrix::from_triplets(3, 2, [(0, 1, 2.0), (2, 0, -1.0), (1, 1, 0.5)]).unwrap();
        let d = s.to_dense();
        let mut flops = 0;
        assert_eq!(s.mul_vec(&[1.0, 2.0], &mut flops), d.matvec(&[1.0, 2.0]));
        assert_eq!(
            s.mul_vec_transpose(&[1.0, 2.0, 3.0], &mut flops),
            d.matvec_transpose(&[1.0, 2.0, 3.0])
        );
        assert_eq!(flops, 6);
        assert_eq!(s.transpose().to_dense(), d.transpose());
        assert_eq!(SparseMatrix::from_dense(&d), s);
    }
}
