//! The multi-layer sparse operator `λ · S_J ⋯ S_1` and its complexity and
//! accuracy metrics.

use crate::dense::DenseMatrix;
use crate::error::{FaustError, Result};
use crate::linalg::{default_max_iter, spectral_norm, LinearOperator};
use crate::sparse::SparseMatrix;

/// Arithmetic performed by operator applications.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct FlopCounter {
    /// One per stored factor entry touched.
    pub multiply_adds: u64,
    /// One per output entry multiplied by the scale.
    pub scalings: u64,
}

impl FlopCounter {
    /// Floating-point operations: two per multiply-add, one per scaling.
    pub fn flops(&self) -> u64 {
        2 * self.multiply_adds + self.scalings
    }
}

/// A scale times an ordered product of sparse factors.
///
/// `factors[0]` is the leftmost factor `S_J`; the last entry is the rightmost
/// factor `S_1`, which acts first on an input vector. Column counts of each
/// factor match the row counts of the next one.
#[derive(Debug, Clone, PartialEq)]
pub struct FaustOperator {
    scale: f64,
    factors: Vec<SparseMatrix>,
}

impl FaustOperator {
    pub fn new(scale: f64, factors: Vec<SparseMatrix>) -> Result<Self> {
        if factors.is_empty() {
            return Err(FaustError::InvalidInput(
                "a FAµST needs at least one factor".into(),
            ));
        }
        if !scale.is_finite() {
            return Err(FaustError::InvalidInput(format!("non-finite scale {scale}")));
        }
        for w in factors.windows(2) {
            if w[0].cols() != w[1].rows() {
                return Err(FaustError::dims(
                    "FaustOperator factor chain",
                    format!("{} rows", w[0].cols()),
                    format!("{} rows", w[1].rows()),
                ));
            }
        }
        Ok(FaustOperator { scale, factors })
    }

    /// Sparsifies dense factors (leftmost first).
    pub fn from_dense_factors(scale: f64, factors: &[DenseMatrix]) -> Result<Self> {
        Self::new(scale, factors.iter().map(SparseMatrix::from_dense).collect())
    }

    pub fn identity(n: usize, num_factors: usize) -> Self {
        FaustOperator {
            scale: 1.0,
            factors: vec![SparseMatrix::identity(n); num_factors.max(1)],
        }
    }

    /// The operator with all-zero factors and zero scale.
    pub fn zero(rows: usize, cols: usize) -> Self {
        FaustOperator {
            scale: 0.0,
            factors: vec![SparseMatrix::zeros(rows, cols)],
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn factors(&self) -> &[SparseMatrix] {
        &self.factors
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    /// Output dimension `m`.
    pub fn rows(&self) -> usize {
        self.factors[0].rows()
    }

    /// Input dimension `n`.
    pub fn cols(&self) -> usize {
        self.factors[self.factors.len() - 1].cols()
    }

    /// Dimensions `[a_1, …, a_{J+1}]` from input (`n`) to output (`m`).
    pub fn dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.factors.iter().rev().map(SparseMatrix::cols).collect();
        dims.push(self.rows());
        dims
    }

    /// Total number of stored nonzeros `s_tot`.
    pub fn s_tot(&self) -> usize {
        self.factors.iter().map(SparseMatrix::nnz).sum()
    }

    pub fn transpose(&self) -> Self {
        FaustOperator {
            scale: self.scale,
            factors: self.factors.iter().rev().map(SparseMatrix::transpose).collect(),
        }
    }

    /// `λ S_J(⋯(S_1 v))`. Costs `s_tot` multiply-adds and one scaling per
    /// output entry.
    pub fn apply_counted(&self, v: &[f64], flops: &mut FlopCounter) -> Result<Vec<f64>> {
        if v.len() != self.cols() {
            return Err(FaustError::dims("faust_apply", self.cols(), v.len()));
        }
        let mut x = v.to_vec();
        for f in self.factors.iter().rev() {
            x = f.mul_vec(&x, &mut flops.multiply_adds);
        }
        x.iter_mut().for_each(|xi| *xi *= self.scale);
        flops.scalings += x.len() as u64;
        Ok(x)
    }

    pub fn apply_transpose_counted(&self, v: &[f64], flops: &mut FlopCounter) -> Result<Vec<f64>> {
        if v.len() != self.rows() {
            return Err(FaustError::dims("faust_apply_transpose", self.rows(), v.len()));
        }
        let mut x = v.to_vec();
        for f in &self.factors {
            x = f.mul_vec_transpose(&x, &mut flops.multiply_adds);
        }
        x.iter_mut().for_each(|xi| *xi *= self.scale);
        flops.scalings += x.len() as u64;
        Ok(x)
    }

    /// `λ ∏ S_j` as a dense matrix.
    pub fn to_dense(&self) -> DenseMatrix {
        let last = self.factors.len() - 1;
        let mut acc = self.factors[last].to_dense();
        for f in self.factors[..last].iter().rev() {
            acc = f.mul_dense(&acc);
        }
        acc.scaled(self.scale)
    }

    /// Relative complexity against the dense matrix it approximates.
    pub fn relative_complexity(&self, a: &DenseMatrix) -> Result<f64> {
        relative_complexity(self, a)
    }
}

impl LinearOperator for FaustOperator {
    fn nrows(&self) -> usize {
        self.rows()
    }

    fn ncols(&self) -> usize {
        self.cols()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        faust_apply(self, x).expect("FaustOperator::apply length mismatch")
    }

    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        faust_apply_transpose(self, y).expect("FaustOperator::apply_transpose length mismatch")
    }
}

pub fn faust_apply(f: &FaustOperator, v: &[f64]) -> Result<Vec<f64>> {
    f.apply_counted(v, &mut FlopCounter::default())
}

pub fn faust_apply_transpose(f: &FaustOperator, v: &[f64]) -> Result<Vec<f64>> {
    f.apply_transpose_counted(v, &mut FlopCounter::default())
}

pub fn faust_to_dense(f: &FaustOperator) -> DenseMatrix {
    f.to_dense()
}

/// `s_tot / ‖A‖₀`; its inverse is the relative complexity gain.
pub fn relative_complexity(f: &FaustOperator, a: &DenseMatrix) -> Result<f64> {
    let dense_nnz = a.nnz();
    if dense_nnz == 0 {
        return Err(FaustError::ZeroMatrix("reference matrix"));
    }
    Ok(f.s_tot() as f64 / dense_nnz as f64)
}

/// Relative error in spectral norm, `‖A − λ∏S_j‖₂ / ‖A‖₂`.
pub fn relative_error(a: &DenseMatrix, f: &FaustOperator) -> Result<f64> {
    if f.rows() != a.rows() || f.cols() != a.cols() {
        return Err(FaustError::dims(
            "relative_error",
            format!("{}x{}", a.rows(), a.cols()),
            format!("{}x{}", f.rows(), f.cols()),
        ));
    }
    relative_error_dense(a, &f.to_dense())
}

/// Spectral-norm relative error between two dense matrices of equal shape.
pub fn relative_error_dense(a: &DenseMatrix, approx: &DenseMatrix) -> Result<f64> {
    if a.is_zero() {
        return Err(FaustError::ZeroMatrix("reference matrix"));
    }
    let diff = a - approx;
    let cap = default_max_iter(a.rows(), a.cols()).max(1000);
    let num = spectral_norm(&diff, 1e-12, cap, 0x5eed).value;
    let den = spectral_norm(a, 1e-12, cap, 0x5eed).value;
    Ok(num / den)
}
