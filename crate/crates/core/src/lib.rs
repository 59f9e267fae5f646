//! Multi-layer sparse matrix factorization.
//!
//! A FAµST ("flexible approximate multi-layer sparse transform") approximates
//! a dense matrix `A` by `λ · S_J ⋯ S_1` with sparse factors, so that
//! products with `A` cost `O(s_tot)` instead of `O(mn)`. This crate provides
//! the operator type, the constraint projections, the PALM solver and its
//! hierarchical driver, sparse recovery with dense or FAµST dictionaries, and
//! a dictionary-learning pipeline for image denoising.

pub mod dense;
pub mod dictlearn;
pub mod error;
pub mod hierarchical;
pub mod image;
pub mod io;
pub mod linalg;
pub mod operator;
pub mod palm;
pub mod projection;
pub mod solvers;
pub mod sparse;
pub mod synthetic;

pub use dense::DenseMatrix;
pub use dictlearn::{denoise_image, hierarchical_dictionary_learn, ksvd_like_init, Codebook, Coder, DenoiseConfig, TrainingSet};
pub use error::{FaustError, Result};
pub use hierarchical::{
    hierarchical_factorize, make_hadamard_plan, make_schedule_plan, FactorizationPlan, Level, Side,
};
pub use linalg::{spectral_norm, truncated_svd, LinearOperator, SpectralEstimate, TruncatedSvd};
pub use operator::{
    faust_apply, faust_apply_transpose, faust_to_dense, relative_complexity, relative_error,
    FaustOperator, FlopCounter,
};
pub use palm::{palm4msa, Init, PalmConfig, PalmState, RunTrace};
pub use projection::{project, Constraint, ConstraintSet};
pub use solvers::{iht, localization_experiment, omp, BatchOmp, LinearOp, LocalizationConfig, LocalizationReport, OmpResult};
pub use sparse::SparseMatrix;
