//! Sparse recovery: orthogonal matching pursuit and iterative hard
//! thresholding, with a dense matrix or a FAµST as the measurement operator.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dense::{dot, norm2, DenseMatrix};
use crate::error::{FaustError, Result};
use crate::linalg::{cholesky_solve, least_norm_solve, spectral_norm, LinearOperator};
use crate::operator::FaustOperator;
use crate::projection::top_k_select;
use crate::synthetic;

/// Measurement operator for the solvers.
#[derive(Debug, Clone, Copy)]
pub enum LinearOp<'a> {
    Dense(&'a DenseMatrix),
    Faust(&'a FaustOperator),
}

impl<'a> From<&'a DenseMatrix> for LinearOp<'a> {
    fn from(m: &'a DenseMatrix) -> Self {
        LinearOp::Dense(m)
    }
}

impl<'a> From<&'a FaustOperator> for LinearOp<'a> {
    fn from(f: &'a FaustOperator) -> Self {
        LinearOp::Faust(f)
    }
}

impl LinearOp<'_> {
    pub fn rows(&self) -> usize {
        match self {
            LinearOp::Dense(m) => m.rows(),
            LinearOp::Faust(f) => f.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            LinearOp::Dense(m) => m.cols(),
            LinearOp::Faust(f) => f.cols(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols() {
            return Err(FaustError::dims("operator apply", self.cols(), x.len()));
        }
        Ok(match self {
            LinearOp::Dense(m) => m.matvec(x),
            LinearOp::Faust(f) => f.apply(x),
        })
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows() {
            return Err(FaustError::dims("operator apply_transpose", self.rows(), y.len()));
        }
        Ok(match self {
            LinearOp::Dense(m) => m.matvec_transpose(y),
            LinearOp::Faust(f) => f.apply_transpose(y),
        })
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        match self {
            LinearOp::Dense(m) => m.column(j),
            LinearOp::Faust(f) => {
                let mut e = vec![0.0; f.cols()];
                e[j] = 1.0;
                f.apply(&e)
            }
        }
    }

    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.cols()).map(|j| norm2(&self.column(j))).collect()
    }

    /// Dense expansion, column by column for a FAµST.
    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            LinearOp::Dense(m) => (*m).clone(),
            LinearOp::Faust(f) => f.to_dense(),
        }
    }

    pub fn spectral_norm(&self, seed: u64) -> f64 {
        let max_iter = 10 * self.rows().max(self.cols()) + 100;
        match self {
            LinearOp::Dense(m) => spectral_norm(*m, 1e-9, max_iter, seed).value,
            LinearOp::Faust(f) => spectral_norm(*f, 1e-9, max_iter, seed).value,
        }
    }
}

/// Output of [`omp`].
#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    pub coefficients: Vec<f64>,
    /// Atoms in the order they were selected.
    pub support: Vec<usize>,
    pub residual_norm: f64,
}

/// Orthogonal matching pursuit with at most `t` atoms.
///
/// Atoms are chosen by largest `|⟨d_j, r⟩|` without normalizing the columns,
/// ties going to the lowest index. Ties are judged up to a relative band of
/// `1e-9`, so a FAµST and its dense expansion select the same atoms.
/// Coefficients solve the normal equations on the selected columns
/// (least-norm solution if they are singular).
/// Stops early once the residual vanishes.
pub fn omp(op: LinearOp<'_>, y: &[f64], t: usize) -> Result<OmpResult> {
    let n = op.cols();
    if t == 0 || t > n {
        return Err(FaustError::InvalidInput(format!("OMP needs 1 <= t <= {n}, got {t}")));
    }
    if y.len() != op.rows() {
        return Err(FaustError::dims("omp signal", op.rows(), y.len()));
    }
    let y_norm = norm2(y);
    let mut support: Vec<usize> = Vec::with_capacity(t);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(t);
    let mut x: Vec<f64> = Vec::new();
    let mut residual = y.to_vec();
    let mut r_norm = y_norm;
    let mut floor = None;

    while support.len() < t && r_norm > 1e-12 * y_norm {
        let corr = op.apply_transpose(&residual)?;
        let floor = *floor
            .get_or_insert_with(|| NOISE_FLOOR * corr.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let Some(j) = select_atom(&corr, &support, floor) else {
            break;
        };
        support.push(j);
        columns.push(op.column(j));
        x = solve_on_support(&columns, y);
        residual = y.to_vec();
        for (c, &xi) in columns.iter().zip(&x) {
            residual.iter_mut().zip(c).for_each(|(r, ci)| *r -= xi * ci);
        }
        r_norm = norm2(&residual);
    }

    let mut coefficients = vec![0.0; n];
    for (&j, &v) in support.iter().zip(&x) {
        coefficients[j] = v;
    }
    Ok(OmpResult {
        coefficients,
        support,
        residual_norm: r_norm,
    })
}

/// Relative band within which correlations count as tied.
const TIE_BAND: f64 = 1e-9;
/// Correlations below this fraction of the first iteration's largest one
/// are treated as zero.
const NOISE_FLOOR: f64 = 1e-12;

/// Largest `|value|` outside `excluded`, ties (up to [`TIE_BAND`]) going to
/// the lowest index. Values under `floor` all tie.
fn select_atom(values: &[f64], excluded: &[usize], floor: f64) -> Option<usize> {
    let max = values
        .iter()
        .enumerate()
        .filter(|(j, _)| !excluded.contains(j))
        .map(|(_, v)| v.abs())
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))?;
    let cut = if max <= floor { 0.0 } else { max * (1.0 - TIE_BAND) };
    (0..values.len()).find(|j| !excluded.contains(j) && values[*j].abs() >= cut)
}

fn solve_on_support(columns: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = columns.len();
    let g = DenseMatrix::from_fn(k, k, |a, b| dot(&columns[a], &columns[b]));
    let rhs: Vec<f64> = columns.iter().map(|c| dot(c, y)).collect();
    cholesky_solve(&g, &rhs).unwrap_or_else(|| least_norm_solve(&g, &rhs))
}

/// OMP for many signals against one dictionary, reusing `DᵀD`.
///
/// Same selection rule as [`omp`]; correlations are updated as
/// `Dᵀy − G_{:,S} x_S` instead of being recomputed from the residual.
#[derive(Debug, Clone)]
pub struct BatchOmp {
    dictionary: DenseMatrix,
    gram: DenseMatrix,
}

impl BatchOmp {
    pub fn new(op: LinearOp<'_>) -> Self {
        let dictionary = op.to_dense();
        let gram = dictionary.transpose_matmul(&dictionary);
        BatchOmp { dictionary, gram }
    }

    pub fn dictionary(&self) -> &DenseMatrix {
        &self.dictionary
    }

    /// Codes one signal; returns `(support, coefficients)` with the support
    /// in selection order.
    pub fn code(&self, y: &[f64], t: usize) -> (Vec<usize>, Vec<f64>) {
        let n = self.dictionary.cols();
        let t = t.min(n);
        let alpha0 = self.dictionary.matvec_transpose(y);
        let y_sq = dot(y, y);
        let floor = NOISE_FLOOR * alpha0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut alpha = alpha0.clone();
        let mut support: Vec<usize> = Vec::with_capacity(t);
        let mut x: Vec<f64> = Vec::new();
        while support.len() < t {
            // ‖r‖² = ‖y‖² − ⟨x, D_Sᵀ y⟩ for the least-squares x.
            let fit: f64 = support.iter().zip(&x).map(|(&j, xi)| xi * alpha0[j]).sum();
            if y_sq - fit <= 1e-24 * y_sq || y_sq == 0.0 {
                break;
            }
            let Some(j) = select_atom(&alpha, &support, floor) else {
                break;
            };
            support.push(j);
            let k = support.len();
            let g = DenseMatrix::from_fn(k, k, |a, b| self.gram.get(support[a], support[b]));
            let rhs: Vec<f64> = support.iter().map(|&s| alpha0[s]).collect();
            x = cholesky_solve(&g, &rhs).unwrap_or_else(|| least_norm_solve(&g, &rhs));
            for (i, a) in alpha.iter_mut().enumerate() {
                let gx: f64 = support.iter().zip(&x).map(|(&s, xs)| self.gram.get(i, s) * xs).sum();
                *a = alpha0[i] - gx;
            }
        }
        (support, x)
    }

    /// Codes every column of `y` in parallel; returns the `n × L`
    /// coefficient matrix.
    pub fn code_columns(&self, y: &DenseMatrix, t: usize) -> Result<DenseMatrix> {
        if y.rows() != self.dictionary.rows() {
            return Err(FaustError::dims("sparse coding signals", self.dictionary.rows(), y.rows()));
        }
        let n = self.dictionary.cols();
        let codes: Vec<(Vec<usize>, Vec<f64>)> =
            (0..y.cols()).into_par_iter().map(|c| self.code(&y.column(c), t)).collect();
        let mut gamma = DenseMatrix::zeros(n, y.cols()).into_vec();
        let cols = y.cols();
        for (c, (support, x)) in codes.into_iter().enumerate() {
            for (j, v) in support.into_iter().zip(x) {
                gamma[j * cols + c] = v;
            }
        }
        DenseMatrix::from_vec(n, cols, gamma)
    }
}

/// Divergence guard for [`iht`].
pub const IHT_DIVERGENCE_LIMIT: f64 = 1e12;

/// Iterative hard thresholding `γ ← H_t(γ + μ opᵀ(y − op γ))` from `γ = 0`.
/// `mu` defaults to `1/‖op‖₂²`.
pub fn iht(op: LinearOp<'_>, y: &[f64], t: usize, steps: usize, mu: Option<f64>) -> Result<Vec<f64>> {
    let n = op.cols();
    if t == 0 {
        return Err(FaustError::InvalidInput("IHT needs t >= 1".into()));
    }
    if y.len() != op.rows() {
        return Err(FaustError::dims("iht signal", op.rows(), y.len()));
    }
    let mu = match mu {
        Some(mu) if mu > 0.0 && mu.is_finite() => mu,
        Some(mu) => return Err(FaustError::InvalidInput(format!("IHT step must be positive, got {mu}"))),
        None => {
            let norm = op.spectral_norm(0x5eed);
            if norm == 0.0 {
                return Ok(vec![0.0; n]);
            }
            1.0 / (norm * norm)
        }
    };
    let mut gamma = vec![0.0; n];
    for step in 0..steps {
        let fit = op.apply(&gamma)?;
        let r: Vec<f64> = y.iter().zip(&fit).map(|(a, b)| a - b).collect();
        let g = op.apply_transpose(&r)?;
        let u: Vec<f64> = gamma.iter().zip(&g).map(|(x, gi)| x + mu * gi).collect();
        gamma = hard_threshold(&u, t);
        let norm = norm2(&gamma);
        if !norm.is_finite() || norm > IHT_DIVERGENCE_LIMIT {
            return Err(FaustError::NumericalFailure(format!(
                "IHT diverged at step {step}: ‖γ‖ = {norm:e}"
            )));
        }
    }
    Ok(gamma)
}

/// Keeps the `t` entries of largest magnitude.
pub fn hard_threshold(u: &[f64], t: usize) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for i in top_k_select(u, t) {
        out[i] = u[i];
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationConfig {
    pub trials: usize,
    pub seed: u64,
    /// Planted sources per trial.
    pub sources: usize,
    /// Optional coordinates of each column, for distance statistics.
    pub coordinates: Option<Vec<Vec<f64>>>,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        LocalizationConfig {
            trials: 500,
            seed: 0,
            sources: 2,
            coordinates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub label: String,
    pub truth: Vec<usize>,
    /// Recovered atoms, sorted.
    pub recovered: Vec<usize>,
    pub overlap: usize,
    /// Mean distance from each true source to the nearest recovered one.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSummary {
    pub label: String,
    pub mean_overlap: f64,
    /// Fraction of trials with the full support recovered.
    pub exact_rate: f64,
    pub mean_distance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalizationReport {
    pub records: Vec<TrialRecord>,
}

impl LocalizationReport {
    pub fn labels(&self) -> Vec<&str> {
        let mut labels: Vec<&str> = Vec::new();
        for r in &self.records {
            if !labels.contains(&r.label.as_str()) {
                labels.push(&r.label);
            }
        }
        labels
    }

    pub fn records_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a TrialRecord> + 'a {
        self.records.iter().filter(move |r| r.label == label)
    }

    pub fn summary(&self) -> Vec<OperatorSummary> {
        self.labels()
            .into_iter()
            .map(|label| {
                let recs: Vec<&TrialRecord> = self.records_for(label).collect();
                let count = recs.len().max(1) as f64;
                let distances: Vec<f64> = recs.iter().filter_map(|r| r.distance).collect();
                OperatorSummary {
                    label: label.to_string(),
                    mean_overlap: recs.iter().map(|r| r.overlap as f64).sum::<f64>() / count,
                    exact_rate: recs.iter().filter(|r| r.overlap == r.truth.len()).count() as f64 / count,
                    mean_distance: (!distances.is_empty())
                        .then(|| distances.iter().sum::<f64>() / distances.len() as f64),
                }
            })
            .collect()
    }

    /// `trial,operator,truth,recovered,overlap,distance`; index lists are
    /// `;`-separated.
    pub fn to_csv(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
        let mut out = String::from("trial,operator,truth,recovered,overlap,distance\n");
        for r in &self.records {
            let distance = r.distance.map(|d| format!("{d}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.trial,
                r.label,
                join(&r.truth),
                join(&r.recovered),
                r.overlap,
                distance
            ));
        }
        out
    }
}

/// Source localization on synthetic data: each trial plants a sparse `γ`
/// with Gaussian amplitudes, measures `y = Mγ`, and runs OMP with `M`
/// (label `"dense"`) and with every labelled FAµST.
pub fn localization_experiment(
    m: &DenseMatrix,
    fausts: &[(String, FaustOperator)],
    config: &LocalizationConfig,
) -> Result<LocalizationReport> {
    let n = m.cols();
    if config.sources == 0 || config.sources > n {
        return Err(FaustError::InvalidInput(format!(
            "need 1 <= sources <= {n}, got {}",
            config.sources
        )));
    }
    for (label, f) in fausts {
        if f.rows() != m.rows() || f.cols() != n {
            return Err(FaustError::dims(
                "localization operator",
                format!("{}x{}", m.rows(), n),
                format!("{}x{} ({label})", f.rows(), f.cols()),
            ));
        }
        if label == "dense" {
            return Err(FaustError::InvalidInput("label \"dense\" is reserved".into()));
        }
    }
    if let Some(coords) = &config.coordinates {
        if coords.len() != n {
            return Err(FaustError::dims("source coordinates", n, coords.len()));
        }
    }
    let ops: Vec<(&str, LinearOp<'_>)> = std::iter::once(("dense", LinearOp::Dense(m)))
        .chain(fausts.iter().map(|(l, f)| (l.as_str(), LinearOp::Faust(f))))
        .collect();

    let per_trial: Vec<Vec<TrialRecord>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = synthetic::rng(trial_seed(config.seed, trial));
            let mut truth = sample(&mut rng, n, config.sources).into_vec();
            truth.sort_unstable();
            let mut gamma = vec![0.0; n];
            for &j in &truth {
                gamma[j] = rng.sample(StandardNormal);
            }
            let y = m.matvec(&gamma);
            ops.iter()
                .map(|(label, op)| {
                    let res = omp(*op, &y, config.sources)?;
                    let mut recovered = res.support;
                    recovered.sort_unstable();
                    let overlap = truth.iter().filter(|j| recovered.contains(j)).count();
                    let distance = config
                        .coordinates
                        .as_ref()
                        .map(|c| mean_nearest_distance(c, &truth, &recovered));
                    Ok(TrialRecord {
                        trial,
                        label: label.to_string(),
                        truth: truth.clone(),
                        recovered,
                        overlap,
                        distance,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalizationReport {
        records: per_trial.into_iter().flatten().collect(),
    })
}

fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (trial as u64).wrapping_add(1).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

fn mean_nearest_distance(coords: &[Vec<f64>], truth: &[usize], recovered: &[usize]) -> f64 {
    if recovered.is_empty() {
        return f64::INFINITY;
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    truth
        .iter()
        .map(|&t| {
            recovered
                .iter()
                .map(|&r| dist(&coords[t], &coords[r]))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / truth.len() as f64
}
