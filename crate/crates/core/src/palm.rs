//! `palm4MSA`: proximal alternating linearized minimization for
//! `½‖A − λ S_J ⋯ S_1‖_F²` subject to one constraint set per factor.
//!
//! Factors are dense working matrices, leftmost (`S_J`) first, as in
//! [`FaustOperator`]. One outer iteration updates the factors from the
//! rightmost to the leftmost, each by a projected gradient step with step
//! `1/c`, `c = (1+α) λ² ‖L‖₂² ‖R‖₂²`, then sets `λ` to its exact minimizer.

use std::fmt::Write as _;

use crate::dense::DenseMatrix;
use crate::error::{FaustError, Result};
use crate::linalg::{default_max_iter, largest_eigenvalue_psd, spectral_norm};
use crate::operator::FaustOperator;
use crate::projection::{project, ConstraintSet};

#[derive(Debug, Clone, PartialEq)]
pub struct PalmConfig {
    /// Number of outer iterations `N`.
    pub max_iter: usize,
    /// Step margin `α` in `c = (1+α)·Lipschitz`.
    pub step_margin: f64,
    /// Relative tolerance of the power iterations for `‖L‖₂`, `‖R‖₂`.
    pub spectral_tol: f64,
    /// Stop once `Ψ` decreased by less than this over the last 10 iterations.
    pub stop_threshold: Option<f64>,
    pub seed: u64,
}

impl Default for PalmConfig {
    fn default() -> Self {
        PalmConfig {
            max_iter: 50,
            step_margin: 1e-3,
            spectral_tol: 1e-9,
            stop_threshold: None,
            seed: 0,
        }
    }
}

impl PalmConfig {
    pub fn with_iterations(max_iter: usize) -> Self {
        PalmConfig {
            max_iter,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(FaustError::InvalidInput("PALM needs at least one iteration".into()));
        }
        if !(self.step_margin > 0.0 && self.step_margin.is_finite()) {
            return Err(FaustError::InvalidInput(format!(
                "step margin must be positive, got {}",
                self.step_margin
            )));
        }
        if !(self.spectral_tol > 0.0) {
            return Err(FaustError::InvalidInput("spectral tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Iterate of the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct PalmState {
    pub lambda: f64,
    /// Leftmost first.
    pub factors: Vec<DenseMatrix>,
    /// Completed outer iterations.
    pub iterations: usize,
    /// `Ψ` after each completed outer iteration.
    pub objective: Vec<f64>,
}

impl PalmState {
    pub fn new(lambda: f64, factors: Vec<DenseMatrix>) -> Self {
        PalmState {
            lambda,
            factors,
            iterations: 0,
            objective: Vec::new(),
        }
    }

    /// `λ = 1`, rightmost free factor zero, every other factor a rectangular
    /// identity (or its frozen value for fixed constraints).
    pub fn default_for(constraints: &[ConstraintSet]) -> Self {
        let last = constraints.iter().rposition(|c| !c.is_fixed()).unwrap_or(0);
        let factors = constraints
            .iter()
            .enumerate()
            .map(|(k, c)| match c.constraint() {
                crate::projection::Constraint::Fixed { matrix } => matrix.clone(),
                _ if k == last => DenseMatrix::zeros(c.rows(), c.cols()),
                _ => DenseMatrix::identity(c.rows(), c.cols()),
            })
            .collect();
        PalmState::new(1.0, factors)
    }

    pub fn product(&self) -> DenseMatrix {
        chain(&self.factors).expect("state has at least one factor")
    }

    pub fn to_faust(&self) -> Result<FaustOperator> {
        FaustOperator::from_dense_factors(self.lambda, &self.factors)
    }
}

#[derive(Debug, Clone)]
pub enum Init {
    /// See [`PalmState::default_for`].
    Default,
    Current(PalmState),
}

/// The data term. `Gram` encodes `½‖Y − λ D Γ‖_F²` for a frozen right
/// operand `Γ` through `cross = YΓᵀ`, `gram = ΓΓᵀ` and `norm_sq = ‖Y‖_F²`;
/// the factors then multiply to `D` only.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Dense(&'a DenseMatrix),
    Gram {
        cross: &'a DenseMatrix,
        gram: &'a DenseMatrix,
        norm_sq: f64,
    },
}

impl Target<'_> {
    fn shape(&self) -> (usize, usize) {
        match self {
            Target::Dense(a) => a.shape(),
            Target::Gram { cross, .. } => cross.shape(),
        }
    }

    /// `½‖A − λD‖²` or its Gram form.
    pub fn objective(&self, lambda: f64, d: &DenseMatrix) -> f64 {
        match *self {
            Target::Dense(a) => {
                let mut r = d.scaled(lambda);
                r.axpy(-1.0, a);
                0.5 * r.frobenius_norm_sq()
            }
            Target::Gram {
                cross,
                gram,
                norm_sq,
            } => {
                let dg = d.matmul(gram);
                let value = norm_sq - 2.0 * lambda * cross.frobenius_dot(d)
                    + lambda * lambda * dg.frobenius_dot(d);
                0.5 * value.max(0.0)
            }
        }
    }

    /// `λD·G − C`, the residual pushed through the frozen operand.
    fn residual(&self, lambda: f64, d: &DenseMatrix) -> DenseMatrix {
        match *self {
            Target::Dense(a) => {
                let mut r = d.scaled(lambda);
                r.axpy(-1.0, a);
                r
            }
            Target::Gram { cross, gram, .. } => {
                let mut r = d.matmul(gram).scaled(lambda);
                r.axpy(-1.0, cross);
                r
            }
        }
    }

    /// Exact minimizer of the data term over `λ`, `None` if `D` is zero.
    fn best_lambda(&self, d: &DenseMatrix) -> Option<f64> {
        let (num, den) = match *self {
            Target::Dense(a) => (a.frobenius_dot(d), d.frobenius_norm_sq()),
            Target::Gram { cross, gram, .. } => {
                (cross.frobenius_dot(d), d.matmul(gram).frobenius_dot(d))
            }
        };
        (den > 0.0).then(|| num / den)
    }

    /// `‖R Γ‖₂²` (with `R = I` when absent).
    fn right_norm_sq(&self, r: Option<&DenseMatrix>, tol: f64, seed: u64) -> f64 {
        match (*self, r) {
            (Target::Dense(_), None) => 1.0,
            (Target::Dense(_), Some(r)) => op_norm_sq(r, tol, seed),
            (Target::Gram { gram, .. }, None) => psd_top(gram, tol, seed),
            (Target::Gram { gram, .. }, Some(r)) => {
                psd_top(&r.matmul(gram).matmul_transpose(r), tol, seed)
            }
        }
    }
}

fn op_norm_sq(m: &DenseMatrix, tol: f64, seed: u64) -> f64 {
    let cap = default_max_iter(m.rows(), m.cols()).max(100);
    spectral_norm(m, tol, cap, seed).value.powi(2)
}

fn psd_top(g: &DenseMatrix, tol: f64, seed: u64) -> f64 {
    let cap = default_max_iter(g.rows(), g.cols()).max(100);
    largest_eigenvalue_psd(g, tol, cap, seed).value
}

/// `½‖A − λ∏S_j‖_F²` on feasible iterates.
pub fn objective(a: &DenseMatrix, lambda: f64, factors: &[DenseMatrix]) -> Result<f64> {
    let d = checked_chain(factors)?;
    if d.shape() != a.shape() {
        return Err(FaustError::dims(
            "objective",
            format!("{}x{}", a.rows(), a.cols()),
            format!("{}x{}", d.rows(), d.cols()),
        ));
    }
    Ok(Target::Dense(a).objective(lambda, &d))
}

/// `λ Lᵀ(λ L S R − A) Rᵀ`, the gradient of the data term in `S`.
pub fn gradient_factor(
    l: &DenseMatrix,
    s: &DenseMatrix,
    r: &DenseMatrix,
    lambda: f64,
    a: &DenseMatrix,
) -> Result<DenseMatrix> {
    if l.cols() != s.rows() || s.cols() != r.rows() || l.rows() != a.rows() || r.cols() != a.cols() {
        return Err(FaustError::dims(
            "gradient_factor",
            format!("L·S·R conformable with {}x{}", a.rows(), a.cols()),
            format!(
                "{}x{} · {}x{} · {}x{}",
                l.rows(),
                l.cols(),
                s.rows(),
                s.cols(),
                r.rows(),
                r.cols()
            ),
        ));
    }
    let d = l.matmul(s).matmul(r);
    let e = Target::Dense(a).residual(lambda, &d);
    Ok(l.transpose_matmul(&e.matmul_transpose(r)).scaled(lambda))
}

/// `λ² ‖L‖₂² ‖R‖₂²`.
pub fn lipschitz_modulus(l: &DenseMatrix, r: &DenseMatrix, lambda: f64) -> f64 {
    let tol = 1e-12;
    lambda * lambda * op_norm_sq(l, tol, 1) * op_norm_sq(r, tol, 2)
}

/// `Tr(AᵀÂ) / Tr(ÂᵀÂ)`.
pub fn update_lambda(a: &DenseMatrix, a_hat: &DenseMatrix) -> Result<f64> {
    if a.shape() != a_hat.shape() {
        return Err(FaustError::dims(
            "update_lambda",
            format!("{}x{}", a.rows(), a.cols()),
            format!("{}x{}", a_hat.rows(), a_hat.cols()),
        ));
    }
    Target::Dense(a)
        .best_lambda(a_hat)
        .ok_or(FaustError::ZeroMatrix("current product"))
}

/// Per-iteration record.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub stage: String,
    pub iteration: usize,
    pub objective: f64,
    pub lambda: f64,
    /// Nonzeros per factor, leftmost first.
    pub nnz: Vec<usize>,
}

/// Snapshot after one hierarchical level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSummary {
    pub level: usize,
    pub relative_error: f64,
    pub relative_complexity: f64,
    /// `‖Y − λD̂Γ‖_F` for dictionary learning.
    pub data_error: Option<f64>,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub levels: Vec<LevelSummary>,
}

impl RunTrace {
    /// Objective values of one stage, in iteration order.
    pub fn objectives(&self, stage: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.stage == stage)
            .map(|r| r.objective)
            .collect()
    }

    pub fn stages(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.stage.as_str()) {
                out.push(&r.stage);
            }
        }
        out
    }

    /// `stage,iteration,objective,lambda,nnz` with nnz joined by `;`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,iteration,objective,lambda,nnz\n");
        for r in &self.records {
            let nnz: Vec<String> = r.nnz.iter().map(usize::to_string).collect();
            let _ = writeln!(
                out,
                "{},{},{:e},{:e},{}",
                r.stage,
                r.iteration,
                r.objective,
                r.lambda,
                nnz.join(";")
            );
        }
        out
    }

    /// `level,relative_error,relative_complexity,data_error`.
    pub fn levels_csv(&self) -> String {
        let mut out = String::from("level,relative_error,relative_complexity,data_error\n");
        for l in &self.levels {
            let data = l.data_error.map(|v| format!("{v:e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{:e},{},{}",
                l.level, l.relative_error, l.relative_complexity, data
            );
        }
        out
    }
}

/// Runs `palm4MSA` on `A` and returns the FAµST with the run's trace.
pub fn palm4msa(
    a: &DenseMatrix,
    constraints: &[ConstraintSet],
    init: Init,
    config: &PalmConfig,
) -> Result<(FaustOperator, RunTrace)> {
    let mut trace = RunTrace::default();
    let state = palm4msa_with(Target::Dense(a), constraints, init, config, "palm", &mut trace)?;
    Ok((state.to_faust()?, trace))
}

/// Solver core on an arbitrary data term, appending one record per outer
/// iteration under `stage`.
pub fn palm4msa_with(
    target: Target<'_>,
    constraints: &[ConstraintSet],
    init: Init,
    config: &PalmConfig,
    stage: &str,
    trace: &mut RunTrace,
) -> Result<PalmState> {
    config.validate()?;
    check_chain(target, constraints)?;
    let mut state = match init {
        Init::Default => PalmState::default_for(constraints),
        Init::Current(s) => s,
    };
    check_state(&state, constraints)?;
    let nf = constraints.len();
    let alpha = config.step_margin;
    let tol = config.spectral_tol;

    for it in 0..config.max_iter {
        // Left products use the factors as they were at the start of the sweep.
        let mut lefts: Vec<Option<DenseMatrix>> = Vec::with_capacity(nf);
        lefts.push(None);
        for k in 1..nf {
            let next = match &lefts[k - 1] {
                None => state.factors[k - 1].clone(),
                Some(l) => l.matmul(&state.factors[k - 1]),
            };
            lefts.push(Some(next));
        }

        let mut right: Option<DenseMatrix> = None;
        for k in (0..nf).rev() {
            if !constraints[k].is_fixed() {
                let seed = step_seed(config.seed, it, k);
                let l = lefts[k].as_ref();
                let s = &state.factors[k];
                let ls = match l {
                    Some(l) => l.matmul(s),
                    None => s.clone(),
                };
                let d = match &right {
                    Some(r) => ls.matmul(r),
                    None => ls,
                };
                let lambda = state.lambda;
                let e = target.residual(lambda, &d);
                let er = match &right {
                    Some(r) => e.matmul_transpose(r),
                    None => e,
                };
                let grad = match l {
                    Some(l) => l.transpose_matmul(&er),
                    None => er,
                };
                let l_sq = l.map_or(1.0, |l| op_norm_sq(l, tol, seed));
                let r_sq = target.right_norm_sq(right.as_ref(), tol, seed ^ 0x9e37_79b9);
                let c = (1.0 + alpha) * lambda * lambda * l_sq * r_sq;
                let candidate = if c > 0.0 && c.is_finite() {
                    let mut u = s.clone();
                    u.axpy(-lambda / c, &grad);
                    u
                } else {
                    s.clone()
                };
                if !candidate.is_finite() {
                    return Err(FaustError::NumericalFailure(format!(
                        "non-finite gradient step on factor {k} at iteration {}",
                        state.iterations + 1
                    )));
                }
                state.factors[k] = project(&candidate, &constraints[k])?;
            }
            right = Some(match right {
                Some(r) => state.factors[k].matmul(&r),
                None => state.factors[k].clone(),
            });
        }

        let d = right.expect("at least one factor");
        if let Some(lambda) = target.best_lambda(&d) {
            state.lambda = lambda;
        }
        let psi = target.objective(state.lambda, &d);
        if !psi.is_finite() || !state.lambda.is_finite() {
            return Err(FaustError::NumericalFailure(format!(
                "objective became non-finite at iteration {}",
                state.iterations + 1
            )));
        }
        state.iterations += 1;
        state.objective.push(psi);
        trace.records.push(TraceRecord {
            stage: stage.to_string(),
            iteration: state.iterations,
            objective: psi,
            lambda: state.lambda,
            nnz: state.factors.iter().map(DenseMatrix::nnz).collect(),
        });

        if let Some(threshold) = config.stop_threshold {
            let hist = &state.objective;
            if hist.len() > 10 && hist[hist.len() - 11] - psi < threshold {
                break;
            }
        }
    }
    Ok(state)
}

fn step_seed(seed: u64, iteration: usize, factor: usize) -> u64 {
    seed.wrapping_mul(0x2545_f491_4f6c_dd1d)
        .wrapping_add((iteration as u64) << 16)
        .wrapping_add(factor as u64)
}

fn chain(factors: &[DenseMatrix]) -> Option<DenseMatrix> {
    let (last, rest) = factors.split_last()?;
    let mut acc = last.clone();
    for f in rest.iter().rev() {
        acc = f.matmul(&acc);
    }
    Some(acc)
}

fn checked_chain(factors: &[DenseMatrix]) -> Result<DenseMatrix> {
    for w in factors.windows(2) {
        if w[0].cols() != w[1].rows() {
            return Err(FaustError::dims("factor chain", w[0].cols(), w[1].rows()));
        }
    }
    chain(factors).ok_or_else(|| FaustError::InvalidInput("no factors".into()))
}

fn check_chain(target: Target<'_>, constraints: &[ConstraintSet]) -> Result<()> {
    let (first, last) = match (constraints.first(), constraints.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(FaustError::InvalidInput("PALM needs at least one constraint".into())),
    };
    for w in constraints.windows(2) {
        if w[0].cols() != w[1].rows() {
            return Err(FaustError::dims(
                "constraint chain",
                format!("{} rows", w[0].cols()),
                format!("{} rows", w[1].rows()),
            ));
        }
    }
    let (m, n) = target.shape();
    if first.rows() != m || last.cols() != n {
        return Err(FaustError::dims(
            "palm4msa target",
            format!("{m}x{n}"),
            format!("{}x{}", first.rows(), last.cols()),
        ));
    }
    if let Target::Gram { gram, .. } = target {
        if gram.shape() != (n, n) {
            return Err(FaustError::dims("Gram matrix", format!("{n}x{n}"), format!("{}x{}", gram.rows(), gram.cols())));
        }
    }
    Ok(())
}

fn check_state(state: &PalmState, constraints: &[ConstraintSet]) -> Result<()> {
    if state.factors.len() != constraints.len() {
        return Err(FaustError::dims(
            "initial factors",
            constraints.len(),
            state.factors.len(),
        ));
    }
    for (f, c) in state.factors.iter().zip(constraints) {
        if f.shape() != c.shape() {
            return Err(FaustError::dims(
                "initial factor shape",
                format!("{}x{}", c.rows(), c.cols()),
                format!("{}x{}", f.rows(), f.cols()),
            ));
        }
    }
    if !state.lambda.is_finite() {
        return Err(FaustError::InvalidInput("non-finite initial scale".into()));
    }
    Ok(())
}
