//! Seeded generators for test and demo inputs.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dense::DenseMatrix;
use crate::error::{FaustError, Result};
use crate::operator::FaustOperator;
use crate::sparse::SparseMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sylvester Hadamard matrix with ±1 entries.
pub fn hadamard(n: usize) -> Result<DenseMatrix> {
    if !n.is_power_of_two() {
        return Err(FaustError::InvalidInput(format!("Hadamard order must be a power of two, got {n}")));
    }
    Ok(DenseMatrix::from_fn(n, n, |i, j| {
        if (i & j).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }))
}

/// `H_n` as `log₂ n` butterfly factors `I ⊗ H₂ ⊗ I`, each with `2n`
/// nonzeros.
pub fn hadamard_faust(n: usize) -> Result<FaustOperator> {
    if !n.is_power_of_two() || n < 2 {
        return Err(FaustError::InvalidInput(format!("Hadamard order must be a power of two >= 2, got {n}")));
    }
    let levels = n.trailing_zeros();
    let factors = (0..levels)
        .map(|k| {
            let stride = 1usize << k;
            let triplets = (0..n).flat_map(move |i| {
                let sign = if i & stride == 0 { 1.0 } else { -1.0 };
                [(i, i & !stride, 1.0), (i, i | stride, sign)]
            });
            SparseMatrix::from_triplets(n, n, triplets)
        })
        .collect::<Result<Vec<_>>>()?;
    FaustOperator::new(1.0, factors)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Gaussian values on `nnz` uniformly drawn positions, scaled to unit
/// Frobenius norm.
pub fn random_sparse_factor(rows: usize, cols: usize, nnz: usize, rng: &mut impl Rng) -> SparseMatrix {
    let nnz = nnz.clamp(1, rows * cols);
    let positions = sample(rng, rows * cols, nnz).into_vec();
    let values: Vec<f64> = positions.iter().map(|_| rng.sample(StandardNormal)).collect();
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    SparseMatrix::from_triplets(
        rows,
        cols,
        positions
            .into_iter()
            .zip(values)
            .map(|(p, v)| (p / cols, p % cols, v / norm)),
    )
    .expect("sampled positions are distinct and in range")
}

/// Like [`random_sparse_factor`] but with exactly `k` entries per column.
pub fn random_column_sparse_factor(rows: usize, cols: usize, k: usize, rng: &mut impl Rng) -> SparseMatrix {
    let k = k.clamp(1, rows);
    let mut triplets = Vec::with_capacity(k * cols);
    for j in 0..cols {
        for i in sample(rng, rows, k) {
            triplets.push((i, j, rng.sample::<f64, _>(StandardNormal)));
        }
    }
    let norm = triplets.iter().map(|t| t.2 * t.2).sum::<f64>().sqrt();
    SparseMatrix::from_triplets(rows, cols, triplets.into_iter().map(|(i, j, v)| (i, j, v / norm)))
        .expect("sampled positions are distinct and in range")
}

/// FAµST with `λ = 1` whose factor `j` (leftmost first) is
/// `dims[j+1] × dims[j]`-shaped in the order given by `shapes`, each with
/// `nnz[j]` random entries.
pub fn random_faust(shapes: &[(usize, usize)], nnz: &[usize], seed: u64) -> Result<FaustOperator> {
    if shapes.len() != nnz.len() {
        return Err(FaustError::dims("random_faust budgets", shapes.len(), nnz.len()));
    }
    let mut r = rng(seed);
    let factors = shapes
        .iter()
        .zip(nnz)
        .map(|(&(rows, cols), &s)| random_sparse_factor(rows, cols, s, &mut r))
        .collect();
    FaustOperator::new(1.0, factors)
}

/// Adds Gaussian noise with `‖N‖_F = level · ‖A‖_F`.
pub fn add_relative_noise(a: &DenseMatrix, level: f64, rng: &mut impl Rng) -> DenseMatrix {
    let noise = gaussian_matrix(a.rows(), a.cols(), rng);
    let scale = level * a.frobenius_norm() / noise.frobenius_norm();
    let mut out = a.clone();
    out.axpy(scale, &noise);
    out
}

/// Deterministic grayscale test picture in `[0, 255]`: smooth shading,
/// a few flat shapes with sharp edges, and a striped patch.
pub fn test_image(size: usize) -> DenseMatrix {
    let s = size as f64;
    DenseMatrix::from_fn(size, size, |i, j| {
        let (y, x) = (i as f64 / s, j as f64 / s);
        let mut v = 60.0 + 90.0 * x + 40.0 * (3.0 * y).sin();
        let (dx, dy) = (x - 0.32, y - 0.35);
        if dx * dx + dy * dy < 0.04 {
            v = 215.0 - 60.0 * y;
        }
        if (0.55..0.9).contains(&x) && (0.55..0.85).contains(&y) {
            v = 35.0 + 20.0 * x;
        }
        if (0.1..0.45).contains(&x) && (0.7..0.92).contains(&y) {
            v = if ((x * s) as usize / 3).is_multiple_of(2) { 190.0 } else { 80.0 };
        }
        if (y - 0.25 - 0.5 * x).abs() < 0.015 && x > 0.5 {
            v = 250.0;
        }
        v.clamp(0.0, 255.0)
    })
}
