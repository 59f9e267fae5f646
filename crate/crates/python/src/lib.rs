//! Python module `faustrs`.
//!
//! Matrices cross the boundary as lists of rows (`numpy_array.tolist()`
//! works); vectors as lists of floats.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use faust_core::io::{faust_from_json, faust_to_json, read_faust, write_faust};
use faust_core::operator::relative_error_dense;
use faust_core::solvers::{iht as iht_core, omp as omp_core};
use faust_core::{
    dictlearn, hierarchical_factorize, make_hadamard_plan, make_schedule_plan, project as project_core,
    synthetic, truncated_svd, ConstraintSet, DenoiseConfig, DenseMatrix, FactorizationPlan, FaustError,
    FaustOperator, FlopCounter, LinearOp, PalmConfig, Side,
};

fn err(e: FaustError) -> PyErr {
    match e {
        FaustError::NumericalFailure(_) => PyRuntimeError::new_err(e.to_string()),
        FaustError::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_dense(rows: Vec<Vec<f64>>) -> PyResult<DenseMatrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    let n = rows.len();
    DenseMatrix::from_vec(n, cols, rows.into_iter().flatten().collect()).map_err(err)
}

fn from_dense(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn parse_side(side: &str) -> PyResult<Side> {
    match side {
        "right" => Ok(Side::Right),
        "left" => Ok(Side::Left),
        other => Err(PyValueError::new_err(format!("side must be 'right' or 'left', got {other:?}"))),
    }
}

/// A FAµST `λ S_J ⋯ S_1`.
#[pyclass(name = "Faust", module = "faustrs", frozen, from_py_object)]
#[derive(Clone)]
struct PyFaust {
    inner: FaustOperator,
}

#[pymethods]
impl PyFaust {
    /// Builds a FAµST from dense factors, leftmost first.
    #[new]
    #[pyo3(signature = (factors, scale = 1.0))]
    fn new(factors: Vec<Vec<Vec<f64>>>, scale: f64) -> PyResult<Self> {
        let dense = factors.into_iter().map(to_dense).collect::<PyResult<Vec<_>>>()?;
        Ok(PyFaust {
            inner: FaustOperator::from_dense_factors(scale, &dense).map_err(err)?,
        })
    }

    #[staticmethod]
    fn identity(n: usize, num_factors: usize) -> Self {
        PyFaust {
            inner: FaustOperator::identity(n, num_factors),
        }
    }

    /// Exact butterfly factorization of the `n x n` Hadamard matrix.
    #[staticmethod]
    fn hadamard(n: usize) -> PyResult<Self> {
        Ok(PyFaust {
            inner: synthetic::hadamard_faust(n).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyFaust {
            inner: faust_from_json(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyFaust {
            inner: read_faust(&path).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        faust_to_json(&self.inner)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_faust(&path, &self.inner).map_err(err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.rows(), self.inner.cols())
    }

    #[getter]
    fn scale(&self) -> f64 {
        self.inner.scale()
    }

    #[getter]
    fn num_factors(&self) -> usize {
        self.inner.num_factors()
    }

    #[getter]
    fn s_tot(&self) -> usize {
        self.inner.s_tot()
    }

    /// Dense copy of factor `k`, leftmost first.
    fn factor(&self, k: usize) -> PyResult<Vec<Vec<f64>>> {
        let f = self
            .inner
            .factors()
            .get(k)
            .ok_or_else(|| PyValueError::new_err(format!("factor index {k} out of range")))?;
        Ok(from_dense(&f.to_dense()))
    }

    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.apply_counted(&x, &mut FlopCounter::default()).map_err(err)
    }

    fn apply_transpose(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner
            .apply_transpose_counted(&y, &mut FlopCounter::default())
            .map_err(err)
    }

    /// Returns `(result, flops)`.
    fn apply_counted(&self, x: Vec<f64>) -> PyResult<(Vec<f64>, u64)> {
        let mut flops = FlopCounter::default();
        let y = self.inner.apply_counted(&x, &mut flops).map_err(err)?;
        Ok((y, flops.flops()))
    }

    fn transpose(&self) -> Self {
        PyFaust {
            inner: self.inner.transpose(),
        }
    }

    fn to_dense(&self) -> Vec<Vec<f64>> {
        from_dense(&self.inner.to_dense())
    }

    fn relative_complexity(&self, a: Vec<Vec<f64>>) -> PyResult<f64> {
        self.inner.relative_complexity(&to_dense(a)?).map_err(err)
    }

    /// Spectral-norm relative error against `a`.
    fn relative_error(&self, a: Vec<Vec<f64>>) -> PyResult<f64> {
        faust_core::relative_error(&to_dense(a)?, &self.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Faust(dims={:?}, factors={}, s_tot={}, scale={})",
            self.inner.dims(),
            self.inner.num_factors(),
            self.inner.s_tot(),
            self.inner.scale()
        )
    }
}

/// Hierarchical factorization of `a`.
///
/// The plan is either `levels`, a list of `(residual, factor)` constraint
/// strings such as `("sp:512", "spcol:2")`, or the schedule given by
/// `factors`, `k`, `s`, `rho` and `p`. Returns `(faust, trace_csv)`.
#[pyfunction]
#[pyo3(signature = (a, levels = None, factors = None, k = 2, s = None, rho = 0.5, p = None, side = "right", iters = 50, global_iters = 50, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn factorize(
    py: Python<'_>,
    a: Vec<Vec<f64>>,
    levels: Option<Vec<(String, String)>>,
    factors: Option<usize>,
    k: usize,
    s: Option<usize>,
    rho: f64,
    p: Option<f64>,
    side: &str,
    iters: usize,
    global_iters: usize,
    seed: u64,
) -> PyResult<(PyFaust, String)> {
    let a = to_dense(a)?;
    let (m, n) = a.shape();
    let side = parse_side(side)?;
    let plan = match (levels, factors) {
        (Some(levels), _) => FactorizationPlan::from_texts(m, n, &levels, side),
        (None, Some(j)) => {
            let s = s.unwrap_or(2 * m);
            let p = p.unwrap_or((m * m) as f64);
            match side {
                Side::Right => make_schedule_plan(m, n, j, k, s, rho, p),
                Side::Left => make_schedule_plan(n, m, j, k, s, rho, p).map(|pl| pl.transposed()),
            }
        }
        (None, None) => return Err(PyValueError::new_err("give either levels or factors")),
    }
    .map_err(err)?;
    run(py, &a, &plan, iters, global_iters, seed)
}

/// Hierarchical factorization of the `n x n` Hadamard matrix with the
/// butterfly plan. Returns `(faust, trace_csv)`.
#[pyfunction]
#[pyo3(signature = (n, iters = 50, global_iters = 50, seed = 0))]
fn factorize_hadamard(py: Python<'_>, n: usize, iters: usize, global_iters: usize, seed: u64) -> PyResult<(PyFaust, String)> {
    let a = synthetic::hadamard(n).map_err(err)?;
    let plan = make_hadamard_plan(n).map_err(err)?;
    run(py, &a, &plan, iters, global_iters, seed)
}

fn run(
    py: Python<'_>,
    a: &DenseMatrix,
    plan: &FactorizationPlan,
    iters: usize,
    global_iters: usize,
    seed: u64,
) -> PyResult<(PyFaust, String)> {
    let inner = PalmConfig {
        seed,
        ..PalmConfig::with_iterations(iters)
    };
    let global = PalmConfig {
        seed,
        ..PalmConfig::with_iterations(global_iters)
    };
    let (f, trace) = py
        .detach(|| hierarchical_factorize(a, plan, &inner, &global))
        .map_err(err)?;
    Ok((PyFaust { inner: f }, trace.to_csv()))
}

/// Euclidean projection of `u` onto a constraint such as `"sp:10"`.
#[pyfunction]
fn project(u: Vec<Vec<f64>>, constraint: &str) -> PyResult<Vec<Vec<f64>>> {
    let u = to_dense(u)?;
    let set = ConstraintSet::parse(constraint, u.rows(), u.cols()).map_err(err)?;
    Ok(from_dense(&project_core(&u, &set).map_err(err)?))
}

enum Operand {
    Dense(DenseMatrix),
    Faust(FaustOperator),
}

impl Operand {
    fn extract(obj: &Bound<'_, PyAny>) -> PyResult<Self> {
        if let Ok(f) = obj.extract::<PyFaust>() {
            return Ok(Operand::Faust(f.inner));
        }
        Ok(Operand::Dense(to_dense(obj.extract()?)?))
    }

    fn op(&self) -> LinearOp<'_> {
        match self {
            Operand::Dense(m) => LinearOp::Dense(m),
            Operand::Faust(f) => LinearOp::Faust(f),
        }
    }
}

/// Orthogonal matching pursuit with a matrix or a `Faust` dictionary.
/// Returns `(coefficients, support)` with the support in selection order.
#[pyfunction]
fn omp(op: &Bound<'_, PyAny>, y: Vec<f64>, t: usize) -> PyResult<(Vec<f64>, Vec<usize>)> {
    let op = Operand::extract(op)?;
    let r = omp_core(op.op(), &y, t).map_err(err)?;
    Ok((r.coefficients, r.support))
}

/// Iterative hard thresholding; `mu` defaults to `1 / ||op||²`.
#[pyfunction]
#[pyo3(signature = (op, y, t, steps = 100, mu = None))]
fn iht(op: &Bound<'_, PyAny>, y: Vec<f64>, t: usize, steps: usize, mu: Option<f64>) -> PyResult<Vec<f64>> {
    let op = Operand::extract(op)?;
    iht_core(op.op(), &y, t, steps, mu).map_err(err)
}

/// Relative spectral error of the rank-`r` truncated SVD and its parameter
/// count `r (m + n + 1)`.
#[pyfunction]
#[pyo3(signature = (a, r, seed = 0))]
fn svd_baseline(a: Vec<Vec<f64>>, r: usize, seed: u64) -> PyResult<(f64, usize)> {
    let a = to_dense(a)?;
    let t = truncated_svd(&a, r, seed).map_err(err)?;
    Ok((relative_error_dense(&a, &t.reconstruct()).map_err(err)?, t.parameter_count()))
}

/// Denoises a grayscale image (values in 0..255) with a learned FAµST
/// dictionary. Returns `(image, dictionary, report)` where `report` maps
/// the report columns to values.
#[pyfunction]
#[pyo3(signature = (noisy, clean = None, patch = 8, training = 10_000, atoms = 128, t = 5, ksvd_iters = 50, factors = 4, k = 2, s = 128, rho = 0.5, p = 4096.0, palm_iters = 50, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn denoise(
    py: Python<'_>,
    noisy: Vec<Vec<f64>>,
    clean: Option<Vec<Vec<f64>>>,
    patch: usize,
    training: usize,
    atoms: usize,
    t: usize,
    ksvd_iters: usize,
    factors: usize,
    k: usize,
    s: usize,
    rho: f64,
    p: f64,
    palm_iters: usize,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, PyFaust, Vec<(String, Option<f64>)>)> {
    let noisy = to_dense(noisy)?;
    let clean = clean.map(to_dense).transpose()?;
    let cfg = DenoiseConfig {
        patch_size: patch,
        training_patches: training,
        atoms,
        t,
        ksvd_iters,
        factors,
        k,
        s,
        rho,
        p,
        palm_iters,
        seed,
        ..DenoiseConfig::default()
    };
    let out = py
        .detach(|| dictlearn::denoise_image(&noisy, &cfg, clean.as_ref(), false))
        .map_err(err)?;
    let r = &out.report;
    let report = vec![
        ("psnr_in".to_string(), r.psnr_in),
        ("psnr_out".to_string(), r.psnr_out),
        ("rc".to_string(), Some(r.relative_complexity)),
        ("s_tot".to_string(), Some(r.s_tot as f64)),
        ("elapsed_secs".to_string(), Some(r.elapsed_secs)),
    ];
    Ok((from_dense(&out.image), PyFaust { inner: out.dictionary }, report))
}

#[pymodule]
fn faustrs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFaust>()?;
    m.add_function(wrap_pyfunction!(factorize, m)?)?;
    m.add_function(wrap_pyfunction!(factorize_hadamard, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(omp, m)?)?;
    m.add_function(wrap_pyfunction!(iht, m)?)?;
    m.add_function(wrap_pyfunction!(svd_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(denoise, m)?)?;
    Ok(())
}
