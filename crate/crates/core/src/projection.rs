//! Projections onto the factor constraint sets.
//!
//! Every sparsity-type set is intersected with the unit Frobenius sphere.
//! For the support-type families (global, per-row, per-column, partition,
//! fixed support, triangular, diagonal) the projection keeps the largest
//! entries of each region and rescales to unit norm. For piecewise-constant
//! sets the projection selects the groups with the largest
//! `|Σ_{C_i} u| / √|C_i|`, fills each with its mean value and rescales.
//!
//! Ties in magnitude are broken by the smallest column-major linear index,
//! so projections are deterministic.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use crate::dense::DenseMatrix;
use crate::error::{FaustError, Result};
use crate::io;

/// An entry position `(row, col)`.
pub type Position = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// At most `s` nonzeros overall.
    GlobalSparsity { s: usize },
    /// At most `k` nonzeros in every column.
    PerColumnSparsity { k: usize },
    /// At most `k` nonzeros in every row.
    PerRowSparsity { k: usize },
    /// `blocks` partition the index set; block `i` holds at most `budgets[i]`
    /// nonzeros.
    PartitionSparsity {
        blocks: Vec<Vec<Position>>,
        budgets: Vec<usize>,
    },
    /// Nonzeros only on `mask`.
    FixedSupport { mask: Vec<Position> },
    /// Upper (`upper == true`) or lower triangle, diagonal included.
    Triangular { upper: bool },
    Diagonal,
    /// Constant on each of the disjoint `groups`, zero outside them, with at
    /// most `s` nonzero groups.
    PiecewiseConstantSparse { groups: Vec<Vec<Position>>, s: usize },
    /// The factor is frozen to `matrix`.
    Fixed { matrix: DenseMatrix },
    /// No constraint; projection is the identity.
    Unconstrained,
}

/// A constraint together with the shape of the factor it applies to.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    rows: usize,
    cols: usize,
    constraint: Constraint,
}

impl ConstraintSet {
    /// Validates `constraint` against the shape. Budgets larger than their
    /// region are clamped to the region size; zero budgets are infeasible.
    pub fn new(rows: usize, cols: usize, constraint: Constraint) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(FaustError::InvalidInput(format!(
                "constraint shape must be positive, got {rows}x{cols}"
            )));
        }
        let check_pos = |p: &Position| -> Result<()> {
            if p.0 >= rows || p.1 >= cols {
                Err(FaustError::InvalidInput(format!(
                    "position ({}, {}) outside {rows}x{cols}",
                    p.0, p.1
                )))
            } else {
                Ok(())
            }
        };
        let zero_budget = |what: &str| {
            FaustError::InfeasibleConstraint(format!("{what} budget must be positive"))
        };
        let constraint = match constraint {
            Constraint::GlobalSparsity { s } => {
                if s == 0 {
                    return Err(zero_budget("global sparsity"));
                }
                Constraint::GlobalSparsity { s: s.min(rows * cols) }
            }
            Constraint::PerColumnSparsity { k } => {
                if k == 0 {
                    return Err(zero_budget("per-column sparsity"));
                }
                Constraint::PerColumnSparsity { k: k.min(rows) }
            }
            Constraint::PerRowSparsity { k } => {
                if k == 0 {
                    return Err(zero_budget("per-row sparsity"));
                }
                Constraint::PerRowSparsity { k: k.min(cols) }
            }
            Constraint::PartitionSparsity { blocks, budgets } => {
                if blocks.len() != budgets.len() {
                    return Err(FaustError::InvalidInput(format!(
                        "{} blocks but {} budgets",
                        blocks.len(),
                        budgets.len()
                    )));
                }
                let mut seen = HashSet::new();
                for block in &blocks {
                    if block.is_empty() {
                        return Err(FaustError::InvalidInput("empty partition block".into()));
                    }
                    for p in block {
                        check_pos(p)?;
                        if !seen.insert(*p) {
                            return Err(FaustError::InvalidInput(format!(
                                "partition blocks overlap at ({}, {})",
                                p.0, p.1
                            )));
                        }
                    }
                }
                if seen.len() != rows * cols {
                    return Err(FaustError::InvalidInput(
                        "partition blocks do not cover every entry".into(),
                    ));
                }
                let budgets: Vec<usize> = budgets
                    .iter()
                    .zip(&blocks)
                    .map(|(b, block)| (*b).min(block.len()))
                    .collect();
                if budgets.iter().sum::<usize>() == 0 {
                    return Err(zero_budget("partition"));
                }
                Constraint::PartitionSparsity { blocks, budgets }
            }
            Constraint::FixedSupport { mask } => {
                let mut mask: Vec<Position> = mask;
                for p in &mask {
                    check_pos(p)?;
                }
                mask.sort_by_key(|&(i, j)| (j, i));
                mask.dedup();
                if mask.is_empty() {
                    return Err(FaustError::InfeasibleConstraint("empty support mask".into()));
                }
                Constraint::FixedSupport { mask }
            }
            Constraint::PiecewiseConstantSparse { groups, s } => {
                if s == 0 {
                    return Err(zero_budget("piecewise-constant group"));
                }
                if groups.is_empty() {
                    return Err(FaustError::InfeasibleConstraint("no groups given".into()));
                }
                let mut seen = HashSet::new();
                for g in &groups {
                    if g.is_empty() {
                        return Err(FaustError::InvalidInput("empty group".into()));
                    }
                    for p in g {
                        check_pos(p)?;
                        if !seen.insert(*p) {
                            return Err(FaustError::InvalidInput(format!(
                                "groups overlap at ({}, {})",
                                p.0, p.1
                            )));
                        }
                    }
                }
                let s = s.min(groups.len());
                Constraint::PiecewiseConstantSparse { groups, s }
            }
            Constraint::Fixed { matrix } => {
                if matrix.shape() != (rows, cols) {
                    return Err(FaustError::dims(
                        "fixed constraint",
                        format!("{rows}x{cols}"),
                        format!("{}x{}", matrix.rows(), matrix.cols()),
                    ));
                }
                Constraint::Fixed { matrix }
            }
            other @ (Constraint::Triangular { .. } | Constraint::Diagonal | Constraint::Unconstrained) => {
                other
            }
        };
        Ok(ConstraintSet {
            rows,
            cols,
            constraint,
        })
    }

    pub fn global_sparsity(rows: usize, cols: usize, s: usize) -> Result<Self> {
        Self::new(rows, cols, Constraint::GlobalSparsity { s })
    }

    pub fn per_column(rows: usize, cols: usize, k: usize) -> Result<Self> {
        Self::new(rows, cols, Constraint::PerColumnSparsity { k })
    }

    pub fn per_row(rows: usize, cols: usize, k: usize) -> Result<Self> {
        Self::new(rows, cols, Constraint::PerRowSparsity { k })
    }

    pub fn fixed(matrix: DenseMatrix) -> Self {
        ConstraintSet {
            rows: matrix.rows(),
            cols: matrix.cols(),
            constraint: Constraint::Fixed { matrix },
        }
    }

    pub fn unconstrained(rows: usize, cols: usize) -> Self {
        ConstraintSet {
            rows,
            cols,
            constraint: Constraint::Unconstrained,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn constraint(&self) -> &Constraint {
        &self.constraint
    }

    /// Whether feasible points have unit Frobenius norm.
    pub fn is_normalized(&self) -> bool {
        !matches!(
            self.constraint,
            Constraint::Fixed { .. } | Constraint::Unconstrained
        )
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self.constraint, Constraint::Fixed { .. })
    }

    /// Upper bound on the number of nonzeros of a feasible point.
    pub fn max_nnz(&self) -> usize {
        let (r, c) = (self.rows, self.cols);
        match &self.constraint {
            Constraint::GlobalSparsity { s } => *s,
            Constraint::PerColumnSparsity { k } => k * c,
            Constraint::PerRowSparsity { k } => k * r,
            Constraint::PartitionSparsity { budgets, .. } => budgets.iter().sum(),
            Constraint::FixedSupport { mask } => mask.len(),
            Constraint::Triangular { upper: true } => (0..r).map(|i| c.saturating_sub(i)).sum(),
            Constraint::Triangular { upper: false } => (0..r).map(|i| (i + 1).min(c)).sum(),
            Constraint::Diagonal => r.min(c),
            Constraint::PiecewiseConstantSparse { groups, s } => {
                let mut sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
                sizes.sort_unstable_by(|a, b| b.cmp(a));
                sizes.iter().take(*s).sum()
            }
            Constraint::Fixed { matrix } => matrix.nnz(),
            Constraint::Unconstrained => r * c,
        }
    }

    /// The same set for transposed matrices.
    pub fn transposed(&self) -> Self {
        let flip = |ps: &Vec<Position>| ps.iter().map(|&(i, j)| (j, i)).collect::<Vec<_>>();
        let constraint = match &self.constraint {
            Constraint::GlobalSparsity { s } => Constraint::GlobalSparsity { s: *s },
            Constraint::PerColumnSparsity { k } => Constraint::PerRowSparsity { k: *k },
            Constraint::PerRowSparsity { k } => Constraint::PerColumnSparsity { k: *k },
            Constraint::PartitionSparsity { blocks, budgets } => Constraint::PartitionSparsity {
                blocks: blocks.iter().map(flip).collect(),
                budgets: budgets.clone(),
            },
            Constraint::FixedSupport { mask } => {
                let mut mask = flip(mask);
                mask.sort_by_key(|&(i, j)| (j, i));
                Constraint::FixedSupport { mask }
            }
            Constraint::Triangular { upper } => Constraint::Triangular { upper: !upper },
            Constraint::Diagonal => Constraint::Diagonal,
            Constraint::PiecewiseConstantSparse { groups, s } => {
                Constraint::PiecewiseConstantSparse {
                    groups: groups.iter().map(flip).collect(),
                    s: *s,
                }
            }
            Constraint::Fixed { matrix } => Constraint::Fixed {
                matrix: matrix.transpose(),
            },
            Constraint::Unconstrained => Constraint::Unconstrained,
        };
        ConstraintSet {
            rows: self.cols,
            cols: self.rows,
            constraint,
        }
    }

    /// Membership test with tolerance `tol` on the norm and on piecewise
    /// constancy.
    pub fn is_feasible(&self, s: &DenseMatrix, tol: f64) -> bool {
        if s.shape() != self.shape() {
            return false;
        }
        if self.is_normalized() && (s.frobenius_norm() - 1.0).abs() > tol {
            return false;
        }
        let (r, c) = self.shape();
        let nz = |i: usize, j: usize| s.get(i, j) != 0.0;
        match &self.constraint {
            Constraint::GlobalSparsity { s: budget } => s.nnz() <= *budget,
            Constraint::PerColumnSparsity { k } => {
                (0..c).all(|j| (0..r).filter(|&i| nz(i, j)).count() <= *k)
            }
            Constraint::PerRowSparsity { k } => {
                (0..r).all(|i| (0..c).filter(|&j| nz(i, j)).count() <= *k)
            }
            Constraint::PartitionSparsity { blocks, budgets } => blocks
                .iter()
                .zip(budgets)
                .all(|(b, &k)| b.iter().filter(|&&(i, j)| nz(i, j)).count() <= k),
            Constraint::FixedSupport { mask } => {
                let allowed: HashSet<Position> = mask.iter().copied().collect();
                all_positions(r, c).all(|p| !nz(p.0, p.1) || allowed.contains(&p))
            }
            Constraint::Triangular { upper } => all_positions(r, c)
                .all(|(i, j)| !nz(i, j) || if *upper { j >= i } else { j <= i }),
            Constraint::Diagonal => all_positions(r, c).all(|(i, j)| !nz(i, j) || i == j),
            Constraint::PiecewiseConstantSparse { groups, s: budget } => {
                let mut covered = HashSet::new();
                let mut active = 0;
                for g in groups {
                    let first = s.get(g[0].0, g[0].1);
                    if g.iter().any(|&(i, j)| (s.get(i, j) - first).abs() > tol) {
                        return false;
                    }
                    if first != 0.0 {
                        active += 1;
                    }
                    covered.extend(g.iter().copied());
                }
                active <= *budget
                    && all_positions(r, c).all(|p| covered.contains(&p) || !nz(p.0, p.1))
            }
            Constraint::Fixed { matrix } => matrix.max_abs_diff(s) <= tol,
            Constraint::Unconstrained => true,
        }
    }

    /// Parses the textual constraint grammar for a `rows x cols` factor:
    ///
    /// ```text
    /// sp:<s>            at most s nonzeros
    /// spcol:<k>         at most k nonzeros per column
    /// sprow:<k>         at most k nonzeros per row
    /// supp:<path>       support of a MatrixMarket file
    /// const:<path>      frozen to a MatrixMarket matrix
    /// pwc:<path>:<s>    piecewise constant on groups read from <path>
    /// toeplitz:<s> | circ:<s> | hankel:<s>
    /// diag | triu | tril | none
    /// ```
    pub fn parse(text: &str, rows: usize, cols: usize) -> Result<Self> {
        let text = text.trim();
        let (head, rest) = match text.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (text, None),
        };
        let need = |what: &str| -> Result<&str> {
            rest.filter(|r| !r.is_empty()).ok_or_else(|| {
                FaustError::InvalidInput(format!("constraint `{text}` is missing its {what}"))
            })
        };
        let count = |v: &str| -> Result<usize> {
            v.trim().parse::<usize>().map_err(|_| {
                FaustError::InvalidInput(format!("constraint `{text}`: `{v}` is not a count"))
            })
        };
        let constraint = match head {
            "sp" => Constraint::GlobalSparsity { s: count(need("budget")?)? },
            "spcol" => Constraint::PerColumnSparsity { k: count(need("budget")?)? },
            "sprow" => Constraint::PerRowSparsity { k: count(need("budget")?)? },
            "supp" => {
                let m = io::read_matrix(Path::new(need("path")?))?;
                let mask = all_positions(m.rows(), m.cols())
                    .filter(|&(i, j)| m.get(i, j) != 0.0)
                    .collect();
                check_file_shape(&m, rows, cols)?;
                Constraint::FixedSupport { mask }
            }
            "const" => {
                let m = io::read_matrix(Path::new(need("path")?))?;
                check_file_shape(&m, rows, cols)?;
                Constraint::Fixed { matrix: m }
            }
            "pwc" => {
                let arg = need("groups path and budget")?;
                let (path, s) = arg.rsplit_once(':').ok_or_else(|| {
                    FaustError::InvalidInput(format!("constraint `{text}` needs pwc:<path>:<s>"))
                })?;
                let groups = io::read_groups(Path::new(path))?;
                Constraint::PiecewiseConstantSparse { groups, s: count(s)? }
            }
            "toeplitz" => Constraint::PiecewiseConstantSparse {
                groups: toeplitz_groups(rows, cols),
                s: count(need("budget")?)?,
            },
            "circ" => {
                if rows != cols {
                    return Err(FaustError::InvalidInput(
                        "circulant constraint needs a square factor".into(),
                    ));
                }
                Constraint::PiecewiseConstantSparse {
                    groups: circulant_groups(rows),
                    s: count(need("budget")?)?,
                }
            }
            "hankel" => Constraint::PiecewiseConstantSparse {
                groups: hankel_groups(rows, cols),
                s: count(need("budget")?)?,
            },
            "diag" => Constraint::Diagonal,
            "triu" => Constraint::Triangular { upper: true },
            "tril" => Constraint::Triangular { upper: false },
            "none" => Constraint::Unconstrained,
            other => {
                return Err(FaustError::InvalidInput(format!(
                    "unknown constraint kind `{other}`"
                )))
            }
        };
        Self::new(rows, cols, constraint)
    }
}

fn check_file_shape(m: &DenseMatrix, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(FaustError::dims(
            "constraint file",
            format!("{rows}x{cols}"),
            format!("{}x{}", m.rows(), m.cols()),
        ));
    }
    Ok(())
}

impl fmt::Display for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.constraint {
            Constraint::GlobalSparsity { s } => write!(f, "sp:{s}"),
            Constraint::PerColumnSparsity { k } => write!(f, "spcol:{k}"),
            Constraint::PerRowSparsity { k } => write!(f, "sprow:{k}"),
            Constraint::PartitionSparsity { blocks, .. } => write!(f, "partition[{}]", blocks.len()),
            Constraint::FixedSupport { mask } => write!(f, "supp[{}]", mask.len()),
            Constraint::Triangular { upper: true } => write!(f, "triu"),
            Constraint::Triangular { upper: false } => write!(f, "tril"),
            Constraint::Diagonal => write!(f, "diag"),
            Constraint::PiecewiseConstantSparse { groups, s } => {
                write!(f, "pwc[{}]:{s}", groups.len())
            }
            Constraint::Fixed { .. } => write!(f, "const"),
            Constraint::Unconstrained => write!(f, "none"),
        }?;
        write!(f, " ({}x{})", self.rows, self.cols)
    }
}

fn all_positions(rows: usize, cols: usize) -> impl Iterator<Item = Position> {
    (0..cols).flat_map(move |j| (0..rows).map(move |i| (i, j)))
}

/// Indices of the `k` entries of largest magnitude, ties going to the
/// smallest index. The result is sorted ascending.
pub fn top_k_select(values: &[f64], k: usize) -> Vec<usize> {
    let k = k.min(values.len());
    if k == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&a, &b| {
            values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b))
        });
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

/// Projects `u` onto `c`: the closest feasible point in Frobenius norm.
///
/// If every selected entry of `u` is zero the normalization is undefined;
/// the selected positions then all receive `1/√|support|`.
pub fn project(u: &DenseMatrix, c: &ConstraintSet) -> Result<DenseMatrix> {
    if u.shape() != c.shape() {
        return Err(FaustError::dims(
            "project",
            format!("{}x{}", c.rows, c.cols),
            format!("{}x{}", u.rows(), u.cols()),
        ));
    }
    let (r, cols) = u.shape();
    let support: Vec<Position> = match &c.constraint {
        Constraint::Fixed { matrix } => return Ok(matrix.clone()),
        Constraint::Unconstrained => return Ok(u.clone()),
        Constraint::PiecewiseConstantSparse { groups, s } => {
            return Ok(project_piecewise_constant(u, groups, *s))
        }
        Constraint::GlobalSparsity { s } => {
            let values: Vec<f64> = all_positions(r, cols).map(|(i, j)| u.get(i, j)).collect();
            top_k_select(&values, *s)
                .into_iter()
                .map(|lin| u.position_of(lin))
                .collect()
        }
        Constraint::PerColumnSparsity { k } => (0..cols)
            .flat_map(|j| {
                let col = u.column(j);
                top_k_select(&col, *k).into_iter().map(move |i| (i, j))
            })
            .collect(),
        Constraint::PerRowSparsity { k } => (0..r)
            .flat_map(|i| top_k_select(u.row(i), *k).into_iter().map(move |j| (i, j)))
            .collect(),
        Constraint::PartitionSparsity { blocks, budgets } => blocks
            .iter()
            .zip(budgets)
            .flat_map(|(block, &k)| {
                let mut ordered = block.clone();
                ordered.sort_by_key(|&(i, j)| (j, i));
                let values: Vec<f64> = ordered.iter().map(|&(i, j)| u.get(i, j)).collect();
                top_k_select(&values, k)
                    .into_iter()
                    .map(move |t| ordered[t])
            })
            .collect(),
        Constraint::FixedSupport { mask } => mask.clone(),
        Constraint::Triangular { upper } => all_positions(r, cols)
            .filter(|&(i, j)| if *upper { j >= i } else { j <= i })
            .collect(),
        Constraint::Diagonal => (0..r.min(cols)).map(|i| (i, i)).collect(),
    };
    Ok(normalize_on_support(u, &support))
}

fn normalize_on_support(u: &DenseMatrix, support: &[Position]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(u.rows(), u.cols());
    let norm = support
        .iter()
        .map(|&(i, j)| u.get(i, j).powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > 0.0 && norm.is_finite() {
        for &(i, j) in support {
            out.set(i, j, u.get(i, j) / norm);
        }
    } else if !support.is_empty() {
        let v = 1.0 / (support.len() as f64).sqrt();
        for &(i, j) in support {
            out.set(i, j, v);
        }
    }
    out
}

fn project_piecewise_constant(u: &DenseMatrix, groups: &[Vec<Position>], s: usize) -> DenseMatrix {
    let sums: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|&(i, j)| u.get(i, j)).sum())
        .collect();
    let scores: Vec<f64> = sums
        .iter()
        .zip(groups)
        .map(|(sum, g)| sum / (g.len() as f64).sqrt())
        .collect();
    let chosen = top_k_select(&scores, s);
    // Optimal amplitudes are the group means, rescaled so ‖S‖_F = 1.
    let energy: f64 = chosen
        .iter()
        .map(|&g| sums[g] * sums[g] / groups[g].len() as f64)
        .sum();
    let mut out = DenseMatrix::zeros(u.rows(), u.cols());
    if energy > 0.0 && energy.is_finite() {
        let norm = energy.sqrt();
        for &g in &chosen {
            let value = sums[g] / groups[g].len() as f64 / norm;
            for &(i, j) in &groups[g] {
                out.set(i, j, value);
            }
        }
    } else {
        let size: usize = chosen.iter().map(|&g| groups[g].len()).sum();
        let value = 1.0 / (size as f64).sqrt();
        for &g in &chosen {
            for &(i, j) in &groups[g] {
                out.set(i, j, value);
            }
        }
    }
    out
}

/// Diagonals `j - i = const` of a `rows x cols` matrix, from the bottom-left
/// corner to the top-right one.
pub fn toeplitz_groups(rows: usize, cols: usize) -> Vec<Vec<Position>> {
    let mut groups = Vec::with_capacity(rows + cols - 1);
    for d in -(rows as isize - 1)..cols as isize {
        groups.push(
            (0..rows)
                .filter_map(|i| {
                    let j = i as isize + d;
                    (0..cols as isize).contains(&j).then_some((i, j as usize))
                })
                .collect(),
        );
    }
    groups
}

/// Wrapped diagonals `(j - i) mod n` of a square `n x n` matrix.
pub fn circulant_groups(n: usize) -> Vec<Vec<Position>> {
    (0..n)
        .map(|d| (0..n).map(|i| (i, (i + d) % n)).collect())
        .collect()
}

/// Anti-diagonals `i + j = const`.
pub fn hankel_groups(rows: usize, cols: usize) -> Vec<Vec<Position>> {
    (0..rows + cols - 1)
        .map(|d| {
            (0..rows)
                .filter(|&i| d >= i && d - i < cols)
                .map(|i| (i, d - i))
                .collect()
        })
        .collect()
}

pub fn row_constant_groups(rows: usize, cols: usize) -> Vec<Vec<Position>> {
    (0..rows).map(|i| (0..cols).map(|j| (i, j)).collect()).collect()
}

pub fn column_constant_groups(rows: usize, cols: usize) -> Vec<Vec<Position>> {
    (0..cols).map(|j| (0..rows).map(|i| (i, j)).collect()).collect()
}
