//! Dictionary learning with FAµST dictionaries and patch-based denoising.
//!
//! A dense dictionary is first learned with a K-SVD-style alternation, then
//! factorized hierarchically while the coefficient matrix `Γ` is refit by
//! OMP after every level.

use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::dense::{dot, norm2, DenseMatrix};
use crate::error::{FaustError, Result};
use crate::hierarchical::{make_schedule_plan, mix_seed, FactorizationPlan, Side};
use crate::image::{all_patch_positions, average_patches, extract_patches, psnr, random_patch_positions};
use crate::operator::{relative_complexity, relative_error, FaustOperator};
use crate::palm::{palm4msa_with, Init, LevelSummary, PalmConfig, PalmState, RunTrace, Target};
use crate::solvers::{BatchOmp, LinearOp};
use crate::synthetic;

/// Training vectors as columns of `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub y: DenseMatrix,
    /// Side of the square patches, when sampled from an image.
    pub patch_size: Option<usize>,
    /// Removed column means, when mean removal was requested.
    pub means: Option<Vec<f64>>,
}

impl TrainingSet {
    pub fn new(y: DenseMatrix) -> Result<Self> {
        if y.cols() == 0 || y.rows() == 0 {
            return Err(FaustError::InvalidInput("training set is empty".into()));
        }
        Ok(TrainingSet {
            y,
            patch_size: None,
            means: None,
        })
    }

    /// `count` random `p × p` patches of `img`.
    pub fn from_image(img: &DenseMatrix, p: usize, count: usize, remove_mean: bool, seed: u64) -> Result<Self> {
        if p == 0 || img.rows() < p || img.cols() < p {
            return Err(FaustError::InvalidInput(format!(
                "image {}x{} is smaller than the {p}x{p} patch",
                img.rows(),
                img.cols()
            )));
        }
        if count == 0 {
            return Err(FaustError::InvalidInput("need at least one training patch".into()));
        }
        let positions = random_patch_positions(img.rows(), img.cols(), p, count, &mut synthetic::rng(seed));
        let mut y = extract_patches(img, p, &positions)?;
        let means = remove_mean.then(|| remove_column_means(&mut y));
        Ok(TrainingSet {
            y,
            patch_size: Some(p),
            means,
        })
    }
}

/// Subtracts each column's mean in place and returns the means.
pub fn remove_column_means(y: &mut DenseMatrix) -> Vec<f64> {
    let (m, l) = y.shape();
    let mut data = y.as_slice().to_vec();
    let mut means = vec![0.0; l];
    for i in 0..m {
        for (c, mu) in means.iter_mut().enumerate() {
            *mu += data[i * l + c];
        }
    }
    means.iter_mut().for_each(|mu| *mu /= m as f64);
    for i in 0..m {
        for (c, mu) in means.iter().enumerate() {
            data[i * l + c] -= mu;
        }
    }
    *y = DenseMatrix::from_vec(m, l, data).expect("same shape");
    means
}

/// Initial dictionary and coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub d: DenseMatrix,
    pub gamma: DenseMatrix,
}

/// Sparse coding by OMP with `t` atoms per column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coder {
    pub t: usize,
    /// Run OMP on unit-norm atoms and rescale. Off by default: atom norms
    /// then act as weights in the selection.
    pub normalize: bool,
}

impl Coder {
    pub fn omp(t: usize) -> Self {
        Coder { t, normalize: false }
    }
}

/// Codes every column of `y` over `dict`; returns `Γ` (`n × L`).
pub fn sparse_code(dict: LinearOp<'_>, y: &DenseMatrix, coder: Coder) -> Result<DenseMatrix> {
    if coder.t == 0 {
        return Err(FaustError::InvalidInput("sparse coding needs t >= 1".into()));
    }
    if !coder.normalize {
        return BatchOmp::new(dict).code_columns(y, coder.t);
    }
    let d = dict.to_dense();
    let norms: Vec<f64> = (0..d.cols())
        .map(|j| norm2(&d.column(j)))
        .map(|v| if v > 0.0 { v } else { 1.0 })
        .collect();
    let unit = DenseMatrix::from_fn(d.rows(), d.cols(), |i, j| d.get(i, j) / norms[j]);
    let g = BatchOmp::new(LinearOp::Dense(&unit)).code_columns(y, coder.t)?;
    Ok(DenseMatrix::from_fn(g.rows(), g.cols(), |j, c| g.get(j, c) / norms[j]))
}

type SparseColumn = Vec<(usize, f64)>;

/// K-SVD-style learning of an `m × n` dictionary with `t`-sparse codes.
///
/// Atoms start as distinct random training columns (Gaussian when there
/// are fewer usable columns than atoms), normalized. Each round codes all
/// columns with OMP, keeping a column's previous code when it fits better,
/// then updates every atom and its coefficients by a rank-1 fit of the
/// residual restricted to the columns using it (power iteration warm
/// started at the current atom). Unused atoms are replaced by the worst
/// represented training column. Returns the codebook and `‖Y − DΓ‖_F`
/// after each round.
pub fn ksvd_like_init(y: &DenseMatrix, n: usize, t: usize, iters: usize, seed: u64) -> Result<(Codebook, Vec<f64>)> {
    let (m, l) = y.shape();
    if m == 0 || l == 0 || n == 0 {
        return Err(FaustError::InvalidInput("K-SVD needs a nonempty Y and n >= 1".into()));
    }
    if t == 0 || t > n {
        return Err(FaustError::InvalidInput(format!("K-SVD needs 1 <= t <= n = {n}, got {t}")));
    }
    let mut rng = synthetic::rng(seed);
    let signals: Vec<Vec<f64>> = (0..l).map(|c| y.column(c)).collect();

    let mut atoms: Vec<Vec<f64>> = Vec::with_capacity(n);
    let usable: Vec<usize> = (0..l).filter(|&c| norm2(&signals[c]) > 0.0).collect();
    for k in sample(&mut rng, usable.len(), n.min(usable.len())) {
        atoms.push(normalized(&signals[usable[k]]));
    }
    while atoms.len() < n {
        atoms.push(normalized(&synthetic::gaussian_vector(m, &mut rng)));
    }

    let mut codes: Vec<SparseColumn> = vec![Vec::new(); l];
    let mut errors = Vec::with_capacity(iters);
    for _ in 0..iters {
        let d = atoms_to_matrix(&atoms, m);
        let coder = BatchOmp::new(LinearOp::Dense(&d));
        codes = codes
            .into_par_iter()
            .zip(signals.par_iter())
            .map(|(old, s)| {
                let (support, x) = coder.code(s, t);
                let new: SparseColumn = support.into_iter().zip(x).collect();
                if old.is_empty() || residual_sq(&atoms, s, &new) <= residual_sq(&atoms, s, &old) {
                    new
                } else {
                    old
                }
            })
            .collect();

        let mut residual: Vec<Vec<f64>> = signals
            .par_iter()
            .zip(codes.par_iter())
            .map(|(s, code)| residual_of(&atoms, s, code))
            .collect();
        let mut users: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (c, code) in codes.iter().enumerate() {
            for (slot, &(k, _)) in code.iter().enumerate() {
                users[k].push((c, slot));
            }
        }
        let mut replaced: Vec<usize> = Vec::new();
        for k in 0..n {
            if users[k].is_empty() {
                let worst = (0..l)
                    .filter(|c| !replaced.contains(c))
                    .max_by(|&a, &b| dot(&residual[a], &residual[a]).total_cmp(&dot(&residual[b], &residual[b])));
                atoms[k] = match worst {
                    Some(c) if norm2(&residual[c]) > 0.0 => {
                        replaced.push(c);
                        normalized(&signals[c])
                    }
                    _ => normalized(&synthetic::gaussian_vector(m, &mut rng)),
                };
                continue;
            }
            let e: Vec<Vec<f64>> = users[k]
                .iter()
                .map(|&(c, slot)| {
                    let g = codes[c][slot].1;
                    residual[c].iter().zip(&atoms[k]).map(|(r, a)| r + g * a).collect()
                })
                .collect();
            let u = rank_one_direction(&e, &atoms[k]);
            for (&(c, slot), ec) in users[k].iter().zip(&e) {
                let g = dot(&u, ec);
                codes[c][slot].1 = g;
                residual[c] = ec.iter().zip(&u).map(|(x, ui)| x - g * ui).collect();
            }
            atoms[k] = u;
        }
        errors.push(residual.iter().map(|r| dot(r, r)).sum::<f64>().sqrt());
    }

    let d = atoms_to_matrix(&atoms, m);
    let gamma = if iters == 0 {
        BatchOmp::new(LinearOp::Dense(&d)).code_columns(y, t)?
    } else {
        codes_to_matrix(&codes, n)
    };
    Ok((Codebook { d, gamma }, errors))
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let norm = norm2(v);
    if norm == 0.0 {
        let mut e = vec![0.0; v.len()];
        e[0] = 1.0;
        return e;
    }
    v.iter().map(|x| x / norm).collect()
}

fn atoms_to_matrix(atoms: &[Vec<f64>], m: usize) -> DenseMatrix {
    DenseMatrix::from_fn(m, atoms.len(), |i, k| atoms[k][i])
}

fn codes_to_matrix(codes: &[SparseColumn], n: usize) -> DenseMatrix {
    let l = codes.len();
    let mut data = vec![0.0; n * l];
    for (c, code) in codes.iter().enumerate() {
        for &(k, v) in code {
            data[k * l + c] = v;
        }
    }
    DenseMatrix::from_vec(n, l, data).expect("shape matches")
}

fn residual_of(atoms: &[Vec<f64>], s: &[f64], code: &SparseColumn) -> Vec<f64> {
    let mut r = s.to_vec();
    for &(k, g) in code {
        r.iter_mut().zip(&atoms[k]).for_each(|(ri, a)| *ri -= g * a);
    }
    r
}

fn residual_sq(atoms: &[Vec<f64>], s: &[f64], code: &SparseColumn) -> f64 {
    let r = residual_of(atoms, s, code);
    dot(&r, &r)
}

/// Leading left singular vector of the matrix with columns `e`, by power
/// iteration on `EEᵀ` from `start`.
fn rank_one_direction(e: &[Vec<f64>], start: &[f64]) -> Vec<f64> {
    let mut u = start.to_vec();
    for _ in 0..10 {
        let mut next = vec![0.0; u.len()];
        for col in e {
            let v = dot(&u, col);
            next.iter_mut().zip(col).for_each(|(x, c)| *x += v * c);
        }
        let norm = norm2(&next);
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        next.iter_mut().for_each(|x| *x /= norm);
        u = next;
    }
    u
}

/// Hierarchical factorization of `d0` in which every global refinement
/// fits `Y ≈ λ D̂ Γ` with `Γ` frozen, and `Γ` is recoded over the current
/// `λ D̂` after each level.
///
/// Returns the FAµST dictionary, the final `Γ`, and a trace whose level
/// summaries carry `‖Y − λ D̂ Γ‖_F` as `data_error` (`relative_error` and
/// `relative_complexity` are measured against `d0`).
pub fn hierarchical_dictionary_learn(
    y: &DenseMatrix,
    d0: &DenseMatrix,
    gamma0: &DenseMatrix,
    plan: &FactorizationPlan,
    coder: Coder,
    inner: &PalmConfig,
    global: &PalmConfig,
) -> Result<(FaustOperator, DenseMatrix, RunTrace)> {
    if d0.rows() != y.rows() {
        return Err(FaustError::dims("dictionary rows", y.rows(), d0.rows()));
    }
    if gamma0.rows() != d0.cols() || gamma0.cols() != y.cols() {
        return Err(FaustError::dims(
            "coefficient matrix",
            format!("{}x{}", d0.cols(), y.cols()),
            format!("{}x{}", gamma0.rows(), gamma0.cols()),
        ));
    }
    if plan.side != Side::Right {
        return Err(FaustError::InvalidInput(
            "dictionary learning peels factors from the right".into(),
        ));
    }
    plan.validate(d0.rows(), d0.cols())?;

    let start = Instant::now();
    let mut trace = RunTrace::default();
    let norm_sq = y.frobenius_norm_sq();
    let mut gamma = gamma0.clone();
    let mut state = PalmState::new(1.0, vec![d0.clone()]);
    let mut constraints = Vec::new();
    let mut faust = state.to_faust()?;

    for (k, level) in plan.levels.iter().enumerate() {
        let l = k + 1;
        let residual = state.factors[0].clone();
        let split = palm4msa_with(
            Target::Dense(&residual),
            &[level.residual.clone(), level.factor.clone()],
            Init::Default,
            &PalmConfig {
                seed: mix_seed(inner.seed, l, 0),
                ..inner.clone()
            },
            &format!("level{l}/split"),
            &mut trace,
        )?;
        let [f2, f1]: [DenseMatrix; 2] = split.factors.try_into().expect("two-factor split");
        let mut factors = vec![f2.scaled(split.lambda), f1];
        factors.extend(state.factors.drain(1..));
        constraints = [level.residual.clone(), level.factor.clone()]
            .into_iter()
            .chain(constraints.drain(1.min(constraints.len())..))
            .collect();

        let cross = y.matmul_transpose(&gamma);
        let gram = gamma.matmul_transpose(&gamma);
        state = palm4msa_with(
            Target::Gram {
                cross: &cross,
                gram: &gram,
                norm_sq,
            },
            &constraints,
            Init::Current(PalmState::new(state.lambda, factors)),
            &PalmConfig {
                seed: mix_seed(global.seed, l, 1),
                ..global.clone()
            },
            &format!("level{l}/global"),
            &mut trace,
        )?;

        faust = state.to_faust()?;
        gamma = sparse_code(LinearOp::Faust(&faust), y, coder)?;
        let fit = faust.to_dense().matmul(&gamma);
        trace.levels.push(LevelSummary {
            level: l,
            relative_error: relative_error(d0, &faust)?,
            relative_complexity: relative_complexity(&faust, d0)?,
            data_error: Some((y - &fit).frobenius_norm()),
            elapsed_secs: start.elapsed().as_secs_f64(),
        });
    }
    Ok((faust, gamma, trace))
}

/// Settings of [`denoise_image`]. None depends on the noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseConfig {
    pub patch_size: usize,
    pub training_patches: usize,
    pub atoms: usize,
    /// Atoms per patch.
    pub t: usize,
    pub ksvd_iters: usize,
    /// Factor count `J` of the dictionary.
    pub factors: usize,
    /// Nonzeros per column of the rightmost factor.
    pub k: usize,
    /// Nonzeros of each square factor.
    pub s: usize,
    pub rho: f64,
    pub p: f64,
    pub palm_iters: usize,
    pub remove_mean: bool,
    pub normalize_atoms: bool,
    pub seed: u64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            patch_size: 8,
            training_patches: 10_000,
            atoms: 128,
            t: 5,
            ksvd_iters: 50,
            factors: 4,
            k: 2,
            s: 128,
            rho: 0.5,
            p: 4096.0,
            palm_iters: 50,
            remove_mean: true,
            normalize_atoms: false,
            seed: 0,
        }
    }
}

impl DenoiseConfig {
    pub fn plan(&self) -> Result<FactorizationPlan> {
        let m = self.patch_size * self.patch_size;
        make_schedule_plan(m, self.atoms, self.factors, self.k, self.s, self.rho, self.p)
    }

    pub fn coder(&self) -> Coder {
        Coder {
            t: self.t,
            normalize: self.normalize_atoms,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseReport {
    /// Noise level, if the caller knows it; only reported.
    pub sigma: Option<f64>,
    pub psnr_in: Option<f64>,
    pub psnr_out: Option<f64>,
    /// Dense K-SVD dictionary through the same pipeline.
    pub psnr_dense: Option<f64>,
    pub relative_complexity: f64,
    pub s_tot: usize,
    pub atoms: usize,
    pub t: usize,
    pub elapsed_secs: f64,
}

impl DenoiseReport {
    pub const CSV_HEADER: &'static str = "sigma,psnr_in,psnr_out,psnr_dense,rc,s_tot,atoms,t,elapsed_secs";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        format!(
            "{},{},{},{},{:.6},{},{},{},{:.3}",
            opt(self.sigma),
            opt(self.psnr_in),
            opt(self.psnr_out),
            opt(self.psnr_dense),
            self.relative_complexity,
            self.s_tot,
            self.atoms,
            self.t,
            self.elapsed_secs
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }
}

#[derive(Debug, Clone)]
pub struct Denoised {
    pub image: DenseMatrix,
    pub dictionary: FaustOperator,
    /// The dense dictionary the FAµST was factorized from.
    pub initial_dictionary: DenseMatrix,
    pub trace: RunTrace,
    pub report: DenoiseReport,
}

/// Learns a FAµST dictionary on random noisy patches and denoises the
/// whole image with it. With `clean`, PSNRs are filled in; with
/// `dense_baseline`, the K-SVD dictionary is also run through the same
/// pipeline.
pub fn denoise_image(
    noisy: &DenseMatrix,
    config: &DenoiseConfig,
    clean: Option<&DenseMatrix>,
    dense_baseline: bool,
) -> Result<Denoised> {
    let start = Instant::now();
    let p = config.patch_size;
    let training = TrainingSet::from_image(noisy, p, config.training_patches, config.remove_mean, config.seed)?;
    let (codebook, _) = ksvd_like_init(&training.y, config.atoms, config.t, config.ksvd_iters, mix_seed(config.seed, 0, 2))?;
    let palm = PalmConfig {
        seed: config.seed,
        ..PalmConfig::with_iterations(config.palm_iters)
    };
    let (dictionary, _, trace) = hierarchical_dictionary_learn(
        &training.y,
        &codebook.d,
        &codebook.gamma,
        &config.plan()?,
        config.coder(),
        &palm,
        &palm,
    )?;
    let image = denoise_with_dictionary(noisy, LinearOp::Faust(&dictionary), p, config.coder(), config.remove_mean)?;

    let psnr_of = |img: &DenseMatrix| clean.map(|c| psnr(c, img)).transpose();
    let psnr_dense = match (dense_baseline, clean) {
        (true, Some(c)) => {
            let img = denoise_with_dictionary(noisy, LinearOp::Dense(&codebook.d), p, config.coder(), config.remove_mean)?;
            Some(psnr(c, &img)?)
        }
        _ => None,
    };
    let report = DenoiseReport {
        sigma: None,
        psnr_in: psnr_of(noisy)?,
        psnr_out: psnr_of(&image)?,
        psnr_dense,
        relative_complexity: relative_complexity(&dictionary, &codebook.d)?,
        s_tot: dictionary.s_tot(),
        atoms: config.atoms,
        t: config.t,
        elapsed_secs: start.elapsed().as_secs_f64(),
    };
    Ok(Denoised {
        image,
        dictionary,
        initial_dictionary: codebook.d,
        trace,
        report,
    })
}

/// Codes every overlapping patch over `dict` and averages the
/// reconstructions.
pub fn denoise_with_dictionary(
    noisy: &DenseMatrix,
    dict: LinearOp<'_>,
    p: usize,
    coder: Coder,
    remove_mean: bool,
) -> Result<DenseMatrix> {
    if dict.rows() != p * p {
        return Err(FaustError::dims("dictionary rows", p * p, dict.rows()));
    }
    let positions = all_patch_positions(noisy.rows(), noisy.cols(), p);
    let mut patches = extract_patches(noisy, p, &positions)?;
    let means = remove_mean.then(|| remove_column_means(&mut patches));
    let gamma = sparse_code(dict, &patches, coder)?;
    let mut recon = dict.to_dense().matmul(&gamma);
    if let Some(means) = means {
        recon = DenseMatrix::from_fn(recon.rows(), recon.cols(), |i, c| recon.get(i, c) + means[c]);
    }
    average_patches(noisy.rows(), noisy.cols(), p, &positions, &recon)
}

/// Overcomplete separable DCT dictionary with `atoms` unit-norm columns of
/// dimension `p²` (`atoms` must be a perfect square).
pub fn dct_dictionary(p: usize, atoms: usize) -> Result<DenseMatrix> {
    let q = (atoms as f64).sqrt().round() as usize;
    if q * q != atoms || q < p {
        return Err(FaustError::InvalidInput(format!(
            "DCT dictionary needs a square atom count >= {}, got {atoms}",
            p * p
        )));
    }
    let mut one_d = DenseMatrix::from_fn(p, q, |i, k| (std::f64::consts::PI * (i as f64) * (k as f64) / q as f64).cos());
    one_d = normalize_columns(&one_d);
    let d = DenseMatrix::from_fn(p * p, atoms, |r, c| one_d.get(r / p, c / q) * one_d.get(r % p, c % q));
    Ok(normalize_columns(&d))
}

fn normalize_columns(d: &DenseMatrix) -> DenseMatrix {
    let norms: Vec<f64> = (0..d.cols()).map(|j| norm2(&d.column(j)).max(f64::MIN_POSITIVE)).collect();
    DenseMatrix::from_fn(d.rows(), d.cols(), |i, j| d.get(i, j) / norms[j])
}
