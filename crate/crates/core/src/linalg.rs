//! Norms and factorizations needed by the solvers: power iteration for the
//! spectral norm, truncated SVD by subspace iteration, and a few small dense
//! kernels (one-sided Jacobi SVD, symmetric Jacobi eigensolver, Cholesky).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::{dot, norm2, DenseMatrix};
use crate::error::{FaustError, Result};

/// Anything that can be applied to a vector and to a vector by its transpose.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_transpose(&self, y: &[f64]) -> Vec<f64>;
}

impl LinearOperator for DenseMatrix {
    fn nrows(&self) -> usize {
        self.rows()
    }

    fn ncols(&self) -> usize {
        self.cols()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matvec(x)
    }

    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        self.matvec_transpose(y)
    }
}

pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-9;

/// Outcome of a power iteration. `converged == false` means `max_iter` was
/// reached and `value` is the best estimate so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Default iteration cap: `10 * max(m, n)`.
pub fn default_max_iter(rows: usize, cols: usize) -> usize {
    10 * rows.max(cols)
}

/// Largest singular value by power iteration on `MᵀM`, started from a
/// seeded uniform random vector. Stops when the relative change of the
/// Rayleigh quotient drops below `tol`.
pub fn spectral_norm<O: LinearOperator + ?Sized>(
    op: &O,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> SpectralEstimate {
    let mut x = random_unit_vector(op.ncols(), seed);
    let mut estimate = 0.0;
    let max_iter = max_iter.max(1);
    for it in 1..=max_iter {
        let y = op.apply(&x);
        let rayleigh = dot(&y, &y);
        let z = op.apply_transpose(&y);
        let z_norm = norm2(&z);
        if rayleigh == 0.0 || z_norm == 0.0 {
            return SpectralEstimate {
                value: rayleigh.sqrt(),
                iterations: it,
                converged: true,
            };
        }
        let change = (rayleigh - estimate).abs() / rayleigh;
        estimate = rayleigh;
        if change < tol {
            return SpectralEstimate {
                value: estimate.sqrt(),
                iterations: it,
                converged: true,
            };
        }
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi = zi / z_norm);
    }
    SpectralEstimate {
        value: estimate.sqrt(),
        iterations: max_iter,
        converged: false,
    }
}

/// Spectral norm with the default tolerance and iteration cap.
pub fn spectral_norm_default(m: &DenseMatrix, seed: u64) -> f64 {
    spectral_norm(m, DEFAULT_SPECTRAL_TOL, default_max_iter(m.rows(), m.cols()), seed).value
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration. Equals `‖B‖₂²` when the input is `B Bᵀ`.
pub fn largest_eigenvalue_psd(g: &DenseMatrix, tol: f64, max_iter: usize, seed: u64) -> SpectralEstimate {
    assert_eq!(g.rows(), g.cols(), "largest_eigenvalue_psd needs a square matrix");
    let mut x = random_unit_vector(g.cols(), seed);
    let mut estimate = 0.0;
    let max_iter = max_iter.max(1);
    for it in 1..=max_iter {
        let y = g.matvec(&x);
        let rayleigh = dot(&x, &y);
        let y_norm = norm2(&y);
        if y_norm == 0.0 || rayleigh <= 0.0 {
            return SpectralEstimate {
                value: rayleigh.max(0.0),
                iterations: it,
                converged: true,
            };
        }
        let change = (rayleigh - estimate).abs() / rayleigh;
        estimate = rayleigh;
        if change < tol {
            return SpectralEstimate {
                value: estimate,
                iterations: it,
                converged: true,
            };
        }
        x.iter_mut().zip(&y).for_each(|(xi, yi)| *xi = yi / y_norm);
    }
    SpectralEstimate {
        value: estimate,
        iterations: max_iter,
        converged: false,
    }
}

fn random_unit_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nrm = norm2(&x);
    if nrm == 0.0 {
        x[0] = 1.0;
    } else {
        x.iter_mut().for_each(|v| *v /= nrm);
    }
    x
}

/// Thin SVD factors of a rank-`r` truncation: `A_r = U diag(σ) Vᵀ`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// `m x r`, orthonormal columns.
    pub u: DenseMatrix,
    /// Nonincreasing singular values.
    pub sigma: Vec<f64>,
    /// `n x r`, orthonormal columns.
    pub v: DenseMatrix,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(σ) Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let us = DenseMatrix::from_fn(self.u.rows(), self.u.cols(), |i, j| {
            self.u.get(i, j) * self.sigma[j]
        });
        us.matmul_transpose(&self.v)
    }

    /// Parameters needed to store the truncation: `r (m + n + 1)`.
    pub fn parameter_count(&self) -> usize {
        self.rank() * (self.u.rows() + self.v.rows() + 1)
    }
}

const SVD_OVERSAMPLE: usize = 8;
const SVD_TOL: f64 = 1e-14;
const SVD_MAX_ITER: usize = 2000;

/// Best rank-`r` approximation by orthogonal (subspace) iteration on `AᵀA`
/// with a Rayleigh-Ritz step through a one-sided Jacobi SVD.
pub fn truncated_svd(a: &DenseMatrix, r: usize, seed: u64) -> Result<TruncatedSvd> {
    let (m, n) = a.shape();
    if r == 0 || r > m.min(n) {
        return Err(FaustError::InvalidInput(format!(
            "rank {r} out of range 1..={} for {m}x{n} matrix",
            m.min(n)
        )));
    }
    if m < n {
        let t = truncated_svd(&a.transpose(), r, seed)?;
        return Ok(TruncatedSvd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }

    let q = n.min(r + SVD_OVERSAMPLE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = DenseMatrix::from_fn(n, q, |_, _| rng.random_range(-1.0..1.0));
    let mut basis = orthonormalize_columns(&start, seed.wrapping_add(1));

    let mut previous: Vec<f64> = vec![f64::INFINITY; r];
    let mut ritz = rayleigh_ritz(a, &basis);
    for it in 0..SVD_MAX_ITER {
        if q == n && it > 0 {
            break;
        }
        let converged = ritz
            .sigma
            .iter()
            .take(r)
            .zip(&previous)
            .all(|(s, p)| (s - p).abs() <= SVD_TOL * ritz.sigma[0].max(f64::MIN_POSITIVE));
        if converged {
            break;
        }
        previous = ritz.sigma[..r].to_vec();
        let w = a.matmul(&basis);
        let z = a.transpose_matmul(&w);
        basis = orthonormalize_columns(&z, seed.wrapping_add(2 + it as u64));
        ritz = rayleigh_ritz(a, &basis);
    }

    let keep: Vec<usize> = (0..r).collect();
    let v = select_columns(&basis.matmul(&ritz.rotation), &keep);
    let sigma = ritz.sigma[..r].to_vec();
    let mut u = select_columns(&ritz.left, &keep);
    complete_orthonormal(&mut u, &sigma, seed.wrapping_add(7));
    Ok(TruncatedSvd { u, sigma, v })
}

struct Ritz {
    /// Left singular vectors of `A V` (columns), sorted by `sigma`.
    left: DenseMatrix,
    sigma: Vec<f64>,
    /// Right rotation inside the subspace.
    rotation: DenseMatrix,
}

fn rayleigh_ritz(a: &DenseMatrix, basis: &DenseMatrix) -> Ritz {
    let b = a.matmul(basis);
    let (left, sigma, rotation) = jacobi_svd(&b);
    Ritz {
        left,
        sigma,
        rotation,
    }
}

/// One-sided Jacobi SVD of a tall matrix `B = U diag(σ) Wᵀ`. Returns `U`
/// (same shape as `B`, columns with `σ = 0` left as zero), `σ` sorted
/// nonincreasing and the orthogonal `W`.
pub fn jacobi_svd(b: &DenseMatrix) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    let (m, q) = b.shape();
    let mut cols: Vec<Vec<f64>> = (0..q).map(|j| b.column(j)).collect();
    let mut w: Vec<Vec<f64>> = (0..q)
        .map(|j| (0..q).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..q {
            for s in p + 1..q {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[s], &cols[s]);
                let gamma = dot(&cols[p], &cols[s]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                rotate_pair(&mut cols, p, s, c, sn);
                rotate_pair(&mut w, p, s, c, sn);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..q).collect();
    let norms: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let sigma: Vec<f64> = order.iter().map(|&k| norms[k]).collect();
    let tiny = sigma.first().copied().unwrap_or(0.0) * 1e-14;
    let u = DenseMatrix::from_fn(m, q, |i, j| {
        let k = order[j];
        if norms[k] > tiny && norms[k] > 0.0 {
            cols[k][i] / norms[k]
        } else {
            0.0
        }
    });
    let rot = DenseMatrix::from_fn(q, q, |i, j| w[order[j]][i]);
    (u, sigma, rot)
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, s: usize, c: f64, sn: f64) {
    let (head, tail) = cols.split_at_mut(s);
    let (cp, cs) = (&mut head[p], &mut tail[0]);
    for (x, y) in cp.iter_mut().zip(cs.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - sn * b;
        *y = sn * a + c * b;
    }
}

fn select_columns(m: &DenseMatrix, keep: &[usize]) -> DenseMatrix {
    DenseMatrix::from_fn(m.rows(), keep.len(), |i, j| m.get(i, keep[j]))
}

/// Replaces zero columns of `u` (those paired with vanishing singular values)
/// by unit vectors orthogonal to the remaining columns.
fn complete_orthonormal(u: &mut DenseMatrix, sigma: &[f64], seed: u64) {
    let tiny = sigma.first().copied().unwrap_or(0.0) * 1e-14;
    if sigma.iter().all(|s| *s > tiny && *s > 0.0) {
        return;
    }
    let (m, r) = u.shape();
    let mut cols: Vec<Vec<f64>> = (0..r).map(|j| u.column(j)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for j in 0..r {
        if sigma[j] > tiny && sigma[j] > 0.0 {
            continue;
        }
        loop {
            let mut v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            for _ in 0..2 {
                for (k, c) in cols.iter().enumerate() {
                    if k == j {
                        continue;
                    }
                    let proj = dot(&v, c);
                    v.iter_mut().zip(c).for_each(|(a, b)| *a -= proj * b);
                }
            }
            let nrm = norm2(&v);
            if nrm > 1e-8 {
                cols[j] = v.into_iter().map(|a| a / nrm).collect();
                break;
            }
        }
    }
    *u = DenseMatrix::from_fn(m, r, |i, j| cols[j][i]);
}

/// Orthonormal basis for the column space by modified Gram-Schmidt with
/// reorthogonalization. Dependent columns are replaced by random directions,
/// so the output always has orthonormal columns.
pub fn orthonormalize_columns(a: &DenseMatrix, seed: u64) -> DenseMatrix {
    let (n, q) = a.shape();
    assert!(q <= n, "cannot orthonormalize {q} columns in dimension {n}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(q);
    for j in 0..q {
        let mut v = a.column(j);
        let scale = norm2(&v);
        let mut attempts = 0;
        loop {
            for _ in 0..2 {
                for b in &basis {
                    let proj = dot(&v, b);
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
                }
            }
            let nrm = norm2(&v);
            if nrm > 1e-10 * scale.max(1e-300) && nrm > 0.0 && attempts < 50 {
                v.iter_mut().for_each(|x| *x /= nrm);
                break;
            }
            attempts += 1;
            v = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        }
        basis.push(v);
    }
    DenseMatrix::from_fn(n, q, |i, j| basis[j][i])
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
/// rotations. Eigenvalues are returned in nonincreasing order with matching
/// eigenvector columns.
pub fn symmetric_eigen(s: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = s.rows();
    assert_eq!(n, s.cols(), "symmetric_eigen needs a square matrix");
    let mut a: Vec<Vec<f64>> = s.to_rows();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let total: f64 = a.iter().flatten().map(|x| x * x).sum();
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - sn * akq;
                    a[k][q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - sn * aqk;
                    a[q][k] = sn * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - sn * vkq;
                    row[q] = sn * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    let values = order.iter().map(|&k| a[k][k]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| v[i][order[j]]);
    (values, vectors)
}

/// Solves `G x = b` for symmetric positive definite `G`. Returns `None` when
/// a pivot is not safely positive.
pub fn cholesky_solve(g: &DenseMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = g.rows();
    let max_diag = (0..n).fold(0.0f64, |m, i| m.max(g.get(i, i).abs()));
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = g.get(i, j);
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 1e-12 * max_diag || sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}

/// Minimum-norm solution of `G x = b` for symmetric positive semidefinite
/// `G`, through its pseudo-inverse.
pub fn least_norm_solve(g: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let (values, vectors) = symmetric_eigen(g);
    let cutoff = values.first().copied().unwrap_or(0.0).abs() * 1e-12;
    let n = g.rows();
    let mut x = vec![0.0; n];
    for (k, &lam) in values.iter().enumerate() {
        if lam <= cutoff || lam <= 0.0 {
            continue;
        }
        let col = vectors.column(k);
        let coef = dot(&col, b) / lam;
        x.iter_mut().zip(&col).for_each(|(xi, ci)| *xi += coef * ci);
    }
    x
}
