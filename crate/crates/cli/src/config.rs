//! Run configuration for `factorize`: the plan file, flag overrides and
//! validation before anything runs.
//!
//! Plan file (TOML key/value pairs, every key optional):
//!
//! ```text
//! input = "a.mtx"
//! side = "right"                 # or "left"
//! levels = ["sp:512;sp:64", …]   # "<residual>;<factor>" per level
//! factors = 4                    # J, with k, s, rho, p below
//! k = 2
//! s = 128
//! rho = 0.5
//! p = 4096
//! iters = 50                     # each two-factor split
//! global_iters = 50              # each global refinement
//! step_margin = 1e-3
//! stop_threshold = 1e-9
//! error_threshold = 0.2
//! ```
//!
//! Constraint texts use `sp:<s>`, `spcol:<k>`, `sprow:<k>`, `supp:<path>`,
//! `const:<path>`, `pwc:<groups-path>:<s>`, `toeplitz:<s>`, `circ:<s>`,
//! `hankel:<s>`, `diag`, `triu`, `tril` and `none`. Explicit levels win over
//! the k/s/ρ/P schedule; with neither, `--demo hadamard` uses the butterfly
//! plan.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use faust_core::{
    make_hadamard_plan, make_schedule_plan, synthetic, DenseMatrix, FactorizationPlan, FaustError,
    PalmConfig, Side,
};

use crate::{Demo, FactorizeArgs, SideArg};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(FaustError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(FaustError::NumericalFailure(_)) => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<FaustError> for CliError {
    fn from(e: FaustError) -> Self {
        CliError::Core(e)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub input: Option<PathBuf>,
    pub side: Option<SideArg>,
    #[serde(default)]
    pub levels: Vec<String>,
    pub factors: Option<usize>,
    pub k: Option<usize>,
    pub s: Option<usize>,
    pub rho: Option<f64>,
    pub p: Option<f64>,
    pub iters: Option<usize>,
    pub global_iters: Option<usize>,
    pub step_margin: Option<f64>,
    pub stop_threshold: Option<f64>,
    pub error_threshold: Option<f64>,
}

impl PlanFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// A validated `factorize` run.
#[derive(Debug)]
pub struct RunConfig {
    pub matrix: DenseMatrix,
    pub label: String,
    pub plan: FactorizationPlan,
    pub inner: PalmConfig,
    pub global: PalmConfig,
}

impl RunConfig {
    pub fn resolve(args: &FactorizeArgs, seed: u64) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => PlanFile::read(p)?,
            None => PlanFile::default(),
        };
        let (matrix, label) = match (args.demo, args.input.as_ref().or(file.input.as_ref())) {
            (Some(Demo::Hadamard), _) => (synthetic::hadamard(args.n)?, format!("hadamard-{}", args.n)),
            (None, Some(path)) => (faust_core::io::read_matrix(path)?, path.display().to_string()),
            (None, None) => return Err(CliError::Config("need --input, --demo or `input` in the config".into())),
        };
        let (m, n) = matrix.shape();
        if m * n < 2 {
            return Err(CliError::Config(format!("matrix too small to factorize ({m}x{n})")));
        }

        let side = match args.side.or(file.side).unwrap_or(SideArg::Right) {
            SideArg::Right => Side::Right,
            SideArg::Left => Side::Left,
        };
        let levels = if args.levels.is_empty() { &file.levels } else { &args.levels };
        let factors = args.factors.or(file.factors);
        let mut plan = if !levels.is_empty() {
            let pairs = levels
                .iter()
                .map(|l| {
                    l.split_once(';')
                        .map(|(r, f)| (r.trim().to_string(), f.trim().to_string()))
                        .ok_or_else(|| CliError::Config(format!("level `{l}` is not \"<residual>;<factor>\"")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            FactorizationPlan::from_texts(m, n, &pairs, side)?
        } else if let Some(j) = factors {
            let k = args.k.or(file.k).unwrap_or(2);
            let s = args.s.or(file.s).unwrap_or(2 * m);
            let rho = args.rho.or(file.rho).unwrap_or(0.5);
            let p = args.p.or(file.p).unwrap_or((m * m) as f64);
            match side {
                Side::Right => make_schedule_plan(m, n, j, k, s, rho, p)?,
                Side::Left => make_schedule_plan(n, m, j, k, s, rho, p)?.transposed(),
            }
        } else if args.demo == Some(Demo::Hadamard) {
            make_hadamard_plan(args.n)?
        } else {
            return Err(CliError::Config("no plan: give --level, --factors or a config file".into()));
        };
        plan.error_threshold = args.error_threshold.or(file.error_threshold);

        let base = PalmConfig {
            step_margin: args.step_margin.or(file.step_margin).unwrap_or(1e-3),
            stop_threshold: args.stop_threshold.or(file.stop_threshold),
            seed,
            ..PalmConfig::default()
        };
        let inner = PalmConfig {
            max_iter: args.iters.or(file.iters).unwrap_or(50),
            ..base.clone()
        };
        let global = PalmConfig {
            max_iter: args.global_iters.or(file.global_iters).unwrap_or(50),
            ..base
        };
        inner.validate()?;
        global.validate()?;
        Ok(RunConfig {
            matrix,
            label,
            plan,
            inner,
            global,
        })
    }
}
