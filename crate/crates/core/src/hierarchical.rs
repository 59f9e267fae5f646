//! Hierarchical factorization: peel one sparse factor at a time off the
//! residual with a 2-factor PALM split, then refine all factors found so far
//! with a global PALM pass.

use std::time::Instant;

use crate::dense::DenseMatrix;
use crate::error::{FaustError, Result};
use crate::operator::{relative_complexity, relative_error, FaustOperator};
use crate::palm::{palm4msa_with, Init, LevelSummary, PalmConfig, PalmState, RunTrace, Target};
use crate::projection::ConstraintSet;

/// Which end of the product the factors are peeled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Side {
    /// `A ≈ T_ℓ S_ℓ ⋯ S_1`: factors come off the right.
    #[default]
    Right,
    /// `A ≈ S_1 ⋯ S_ℓ T_ℓ`: factors come off the left (solved on `Aᵀ`).
    Left,
}

/// Constraint pair of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    /// `Ẽ_ℓ`, for the residual `T_ℓ`.
    pub residual: ConstraintSet,
    /// `E_ℓ`, for the factor `S_ℓ`.
    pub factor: ConstraintSet,
}

/// Constraints for a `J`-factor hierarchical run: `J − 1` levels.
///
/// Shapes are given in the orientation of `A`. With [`Side::Right`] level
/// ℓ's residual is `m × a_{ℓ+1}` and its factor `a_{ℓ+1} × a_ℓ` with
/// `a_1 = n`; with [`Side::Left`] everything is mirrored.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationPlan {
    pub levels: Vec<Level>,
    pub side: Side,
    /// Stop adding factors once the relative error after a level exceeds
    /// this value, keeping the previous level's result.
    pub error_threshold: Option<f64>,
}

impl FactorizationPlan {
    pub fn new(levels: Vec<Level>, side: Side) -> Result<Self> {
        if levels.is_empty() {
            return Err(FaustError::InvalidInput(
                "a plan needs at least one level (J >= 2)".into(),
            ));
        }
        Ok(FactorizationPlan {
            levels,
            side,
            error_threshold: None,
        })
    }

    /// Target factor count `J`.
    pub fn num_factors(&self) -> usize {
        self.levels.len() + 1
    }

    /// The same plan expressed for `Aᵀ`, with the side flipped.
    pub fn transposed(&self) -> Self {
        FactorizationPlan {
            levels: self
                .levels
                .iter()
                .map(|l| Level {
                    residual: l.residual.transposed(),
                    factor: l.factor.transposed(),
                })
                .collect(),
            side: match self.side {
                Side::Right => Side::Left,
                Side::Left => Side::Right,
            },
            error_threshold: self.error_threshold,
        }
    }

    /// Checks that the shapes chain for an `m × n` input.
    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        let plan = match self.side {
            Side::Right => self.clone(),
            Side::Left => self.transposed(),
        };
        let (m, n) = match self.side {
            Side::Right => (m, n),
            Side::Left => (n, m),
        };
        let mut width = n;
        for (k, level) in plan.levels.iter().enumerate() {
            let (fr, fc) = level.factor.shape();
            let (rr, rc) = level.residual.shape();
            if fc != width || rr != m || rc != fr {
                return Err(FaustError::dims(
                    "factorization plan",
                    format!("level {}: residual {m}x{fr}, factor {fr}x{width}", k + 1),
                    format!("residual {rr}x{rc}, factor {fr}x{fc}"),
                ));
            }
            width = fr;
        }
        Ok(())
    }

    /// Builds a plan from constraint texts, one `(residual, factor)` pair per
    /// level. Intermediate dimensions all equal `m` for [`Side::Right`] and
    /// `n` for [`Side::Left`].
    pub fn from_texts(m: usize, n: usize, levels: &[(String, String)], side: Side) -> Result<Self> {
        let parsed = levels
            .iter()
            .enumerate()
            .map(|(k, (res, fac))| {
                let (res_shape, fac_shape) = match side {
                    Side::Right => ((m, m), (m, if k == 0 { n } else { m })),
                    Side::Left => ((n, n), (if k == 0 { m } else { n }, n)),
                };
                Ok(Level {
                    residual: ConstraintSet::parse(res, res_shape.0, res_shape.1)?,
                    factor: ConstraintSet::parse(fac, fac_shape.0, fac_shape.1)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let plan = Self::new(parsed, side)?;
        plan.validate(m, n)?;
        Ok(plan)
    }
}

/// Plan that recovers the butterfly factorization of the `n × n` Hadamard
/// matrix: `J = log₂ n`, residual budgets `n²/2^ℓ`, factor budget `2n`.
pub fn make_hadamard_plan(n: usize) -> Result<FactorizationPlan> {
    if !n.is_power_of_two() || n < 4 {
        return Err(FaustError::InvalidInput(format!(
            "Hadamard plan needs n = 2^N with N >= 2, got {n}"
        )));
    }
    let j = n.trailing_zeros() as usize;
    let levels = (1..j)
        .map(|l| {
            Ok(Level {
                residual: ConstraintSet::global_sparsity(n, n, (n * n) >> l)?,
                factor: ConstraintSet::global_sparsity(n, n, 2 * n)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FactorizationPlan::new(levels, Side::Right)
}

/// Plan with a `k`-sparse-column rightmost factor (`m × n`), `s`-sparse
/// square intermediate factors, and residual budgets `⌊P ρ^{ℓ−1}⌋`.
pub fn make_schedule_plan(
    m: usize,
    n: usize,
    j: usize,
    k: usize,
    s: usize,
    rho: f64,
    p: f64,
) -> Result<FactorizationPlan> {
    if j < 2 {
        return Err(FaustError::InvalidInput(format!("schedule needs J >= 2, got {j}")));
    }
    if !(rho > 0.0 && rho.is_finite() && p > 0.0 && p.is_finite()) {
        return Err(FaustError::InvalidInput(format!(
            "schedule needs positive finite rho and P, got {rho} and {p}"
        )));
    }
    let levels = (1..j)
        .map(|l| {
            let budget = (p * rho.powi(l as i32 - 1)).floor();
            if budget < 1.0 {
                return Err(FaustError::InfeasibleConstraint(format!(
                    "residual budget at level {l} floors to zero"
                )));
            }
            let factor = if l == 1 {
                ConstraintSet::per_column(m, n, k)?
            } else {
                ConstraintSet::global_sparsity(m, m, s)?
            };
            Ok(Level {
                residual: ConstraintSet::global_sparsity(m, m, budget as usize)?,
                factor,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FactorizationPlan::new(levels, Side::Right)
}

/// Residual budgets `⌊P ρ^{ℓ−1}⌋` for `ℓ = 1 … J−1`.
pub fn schedule_budgets(j: usize, rho: f64, p: f64) -> Vec<usize> {
    (1..j).map(|l| (p * rho.powi(l as i32 - 1)).floor() as usize).collect()
}

/// Runs the hierarchical algorithm and returns the `J`-factor FAµST (fewer
/// if the plan's error threshold stopped it early) with a trace holding
/// every PALM iteration and one [`LevelSummary`] per level.
pub fn hierarchical_factorize(
    a: &DenseMatrix,
    plan: &FactorizationPlan,
    inner: &PalmConfig,
    global: &PalmConfig,
) -> Result<(FaustOperator, RunTrace)> {
    if a.rows() * a.cols() < 2 {
        return Err(FaustError::InvalidInput("matrix too small to factorize".into()));
    }
    plan.validate(a.rows(), a.cols())?;
    match plan.side {
        Side::Right => factorize_from_right(a, plan, inner, global),
        Side::Left => {
            let (f, trace) = factorize_from_right(&a.transpose(), &plan.transposed(), inner, global)?;
            Ok((f.transpose(), trace))
        }
    }
}

fn factorize_from_right(
    a: &DenseMatrix,
    plan: &FactorizationPlan,
    inner: &PalmConfig,
    global: &PalmConfig,
) -> Result<(FaustOperator, RunTrace)> {
    let start = Instant::now();
    let mut trace = RunTrace::default();
    // Leftmost first: [T_ℓ, S_ℓ, …, S_1].
    let mut state = PalmState::new(1.0, vec![a.clone()]);
    let mut constraints: Vec<ConstraintSet> = Vec::new();
    let mut previous: Option<FaustOperator> = None;

    for (k, level) in plan.levels.iter().enumerate() {
        let l = k + 1;
        let residual = state.factors[0].clone();
        let split_cfg = PalmConfig {
            seed: mix_seed(inner.seed, l, 0),
            ..inner.clone()
        };
        let split = palm4msa_with(
            Target::Dense(&residual),
            &[level.residual.clone(), level.factor.clone()],
            Init::Default,
            &split_cfg,
            &format!("level{l}/split"),
            &mut trace,
        )?;
        let [f2, f1]: [DenseMatrix; 2] = split
            .factors
            .try_into()
            .expect("two-factor split returns two factors");
        let t = f2.scaled(split.lambda);

        let mut factors = vec![t, f1];
        factors.extend(state.factors.drain(1..));
        constraints = [level.residual.clone(), level.factor.clone()]
            .into_iter()
            .chain(constraints.drain(1.min(constraints.len())..))
            .collect();

        let global_cfg = PalmConfig {
            seed: mix_seed(global.seed, l, 1),
            ..global.clone()
        };
        state = palm4msa_with(
            Target::Dense(a),
            &constraints,
            Init::Current(PalmState::new(state.lambda, factors)),
            &global_cfg,
            &format!("level{l}/global"),
            &mut trace,
        )?;

        let faust = state.to_faust()?;
        let re = relative_error(a, &faust)?;
        trace.levels.push(LevelSummary {
            level: l,
            relative_error: re,
            relative_complexity: relative_complexity(&faust, a)?,
            data_error: None,
            elapsed_secs: start.elapsed().as_secs_f64(),
        });
        if let (Some(threshold), Some(prev)) = (plan.error_threshold, previous.as_ref()) {
            if re > threshold {
                return Ok((prev.clone(), trace));
            }
        }
        previous = Some(faust);
    }
    let faust = previous.expect("plan has at least one level");
    Ok((faust, trace))
}

pub(crate) fn mix_seed(seed: u64, level: usize, phase: u64) -> u64 {
    seed ^ ((level as u64) << 32) ^ (phase << 48)
}
