//! File formats: MatrixMarket (coordinate and array), plain whitespace text
//! for dense matrices and vectors, the FAµST JSON container, and constraint
//! group lists.
//!
//! Every writer goes through [`write_atomic`], which writes a sibling
//! temporary file and renames it over the target.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{FaustError, Result};
use crate::operator::FaustOperator;
use crate::projection::Position;
use crate::sparse::SparseMatrix;

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| FaustError::InvalidInput(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Pattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

struct Header {
    coordinate: bool,
    field: Field,
    symmetry: Symmetry,
}

fn parse_header(line: &str) -> Result<Header> {
    let tokens: Vec<String> = line.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(FaustError::parse(1, "expected `%%MatrixMarket matrix <format> <field> <symmetry>`"));
    }
    let coordinate = match tokens[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(FaustError::parse(1, format!("unsupported format `{other}`"))),
    };
    let field = match tokens[3].as_str() {
        "real" | "double" | "integer" => Field::Real,
        "pattern" if coordinate => Field::Pattern,
        other => return Err(FaustError::parse(1, format!("unsupported field `{other}`"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(FaustError::parse(1, format!("unsupported symmetry `{other}`"))),
    };
    Ok(Header {
        coordinate,
        field,
        symmetry,
    })
}

/// Data lines with their 1-based line numbers, comments and blanks skipped.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('%'))
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| FaustError::parse(line, format!("missing {what}")))?
        .parse::<T>()
        .map_err(|_| FaustError::parse(line, format!("invalid {what}")))
}

/// Triplets (0-based) from MatrixMarket text, symmetric storage expanded.
fn parse_matrix_market(text: &str) -> Result<(usize, usize, Vec<(usize, usize, f64)>)> {
    let first = text.lines().next().unwrap_or_default();
    let header = parse_header(first)?;
    let mut lines = data_lines(text);
    let (ln, size) = lines
        .next()
        .ok_or_else(|| FaustError::parse(2, "missing size line"))?;
    let mut tok = size.split_whitespace();
    let rows: usize = parse_num(tok.next(), ln, "row count")?;
    let cols: usize = parse_num(tok.next(), ln, "column count")?;
    let mut triplets = Vec::new();
    if header.coordinate {
        let nnz: usize = parse_num(tok.next(), ln, "entry count")?;
        for (ln, line) in lines.by_ref().take(nnz) {
            let mut tok = line.split_whitespace();
            let i: usize = parse_num(tok.next(), ln, "row index")?;
            let j: usize = parse_num(tok.next(), ln, "column index")?;
            if i == 0 || j == 0 || i > rows || j > cols {
                return Err(FaustError::parse(ln, format!("index ({i}, {j}) out of range")));
            }
            let v: f64 = match header.field {
                Field::Pattern => 1.0,
                Field::Real => parse_num(tok.next(), ln, "value")?,
            };
            triplets.push((i - 1, j - 1, v));
            if i != j {
                match header.symmetry {
                    Symmetry::General => {}
                    Symmetry::Symmetric => triplets.push((j - 1, i - 1, v)),
                    Symmetry::SkewSymmetric => triplets.push((j - 1, i - 1, -v)),
                }
            }
        }
        if triplets.len() < nnz {
            return Err(FaustError::parse(ln, format!("expected {nnz} entries")));
        }
    } else {
        let values: Vec<(usize, f64)> = lines
            .flat_map(|(ln, l)| l.split_whitespace().map(move |t| (ln, t)))
            .map(|(ln, t)| parse_num(Some(t), ln, "value").map(|v| (ln, v)))
            .collect::<Result<_>>()?;
        let mut it = values.into_iter();
        // Array storage is column-major; symmetric variants store the lower triangle.
        for j in 0..cols {
            let start = match header.symmetry {
                Symmetry::General => 0,
                Symmetry::Symmetric => j,
                Symmetry::SkewSymmetric => j + 1,
            };
            for i in start..rows {
                let (_, v) = it
                    .next()
                    .ok_or_else(|| FaustError::parse(ln, "too few array values"))?;
                triplets.push((i, j, v));
                if i != j {
                    match header.symmetry {
                        Symmetry::General => {}
                        Symmetry::Symmetric => triplets.push((j, i, v)),
                        Symmetry::SkewSymmetric => triplets.push((j, i, -v)),
                    }
                }
            }
        }
    }
    Ok((rows, cols, triplets))
}

pub fn parse_sparse_matrix_market(text: &str) -> Result<SparseMatrix> {
    let (rows, cols, triplets) = parse_matrix_market(text)?;
    SparseMatrix::from_triplets(rows, cols, triplets)
}

/// Dense matrix from MatrixMarket (either layout) or from plain whitespace
/// text with one row per line.
pub fn parse_dense(text: &str) -> Result<DenseMatrix> {
    if text.trim_start().starts_with("%%MatrixMarket") {
        let (rows, cols, triplets) = parse_matrix_market(text.trim_start())?;
        if rows == 0 || cols == 0 {
            return Err(FaustError::InvalidInput("empty matrix".into()));
        }
        let mut data = vec![0.0; rows * cols];
        for (i, j, v) in triplets {
            data[i * cols + j] += v;
        }
        return DenseMatrix::from_vec(rows, cols, data);
    }
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| parse_num::<f64>(Some(t), k + 1, "value"))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(FaustError::InvalidInput("empty matrix file".into()));
    }
    DenseMatrix::from_rows(&rows)
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    parse_dense(&fs::read_to_string(path)?)
}

pub fn read_sparse(path: &Path) -> Result<SparseMatrix> {
    parse_sparse_matrix_market(&fs::read_to_string(path)?)
}

pub fn sparse_to_matrix_market(s: &SparseMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", s.rows(), s.cols(), s.nnz());
    for t in s.entries() {
        let _ = writeln!(out, "{} {} {}", t.row + 1, t.col + 1, t.value);
    }
    out
}

pub fn dense_to_matrix_market(m: &DenseMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(out, "{} {}", m.rows(), m.cols());
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            let _ = writeln!(out, "{}", m.get(i, j));
        }
    }
    out
}

pub fn write_sparse(path: &Path, s: &SparseMatrix) -> Result<()> {
    write_atomic(path, sparse_to_matrix_market(s).as_bytes())
}

pub fn write_dense(path: &Path, m: &DenseMatrix) -> Result<()> {
    write_atomic(path, dense_to_matrix_market(m).as_bytes())
}

/// Whitespace-separated numbers in any layout.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim_start().starts_with('#'))
        .flat_map(|(k, l)| l.split_whitespace().map(move |t| (k + 1, t)))
        .map(|(ln, t)| {
            let v: f64 = parse_num(Some(t), ln, "value")?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(FaustError::parse(ln, "non-finite value"))
            }
        })
        .collect()
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    parse_vector(&fs::read_to_string(path)?)
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut out = String::new();
    for x in v {
        let _ = writeln!(out, "{x}");
    }
    write_atomic(path, out.as_bytes())
}

/// Constraint groups: one group per line, each entry a 0-based `row,col`
/// pair; `#` starts a comment line.
pub fn parse_groups(text: &str) -> Result<Vec<Vec<Position>>> {
    let mut groups = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let group = line
            .split_whitespace()
            .map(|tok| {
                let (i, j) = tok
                    .split_once(',')
                    .ok_or_else(|| FaustError::parse(k + 1, format!("expected row,col, got `{tok}`")))?;
                Ok((
                    parse_num(Some(i), k + 1, "row")?,
                    parse_num(Some(j), k + 1, "column")?,
                ))
            })
            .collect::<Result<Vec<Position>>>()?;
        groups.push(group);
    }
    Ok(groups)
}

pub fn read_groups(path: &Path) -> Result<Vec<Vec<Position>>> {
    parse_groups(&fs::read_to_string(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct FactorDoc {
    rows: usize,
    cols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FaustDoc {
    scale: f64,
    /// `[a_1, …, a_{J+1}]`, input dimension first.
    dims: Vec<usize>,
    /// Leftmost factor first.
    factors: Vec<FactorDoc>,
}

pub fn faust_to_json(f: &FaustOperator) -> String {
    let doc = FaustDoc {
        scale: f.scale(),
        dims: f.dims(),
        factors: f
            .factors()
            .iter()
            .map(|s| FactorDoc {
                rows: s.rows(),
                cols: s.cols(),
                triplets: s.entries().iter().map(|t| (t.row, t.col, t.value)).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("FAµST document serializes")
}

pub fn faust_from_json(text: &str) -> Result<FaustOperator> {
    let doc: FaustDoc = serde_json::from_str(text)?;
    let factors = doc
        .factors
        .into_iter()
        .map(|f| SparseMatrix::from_triplets(f.rows, f.cols, f.triplets))
        .collect::<Result<Vec<_>>>()?;
    let faust = FaustOperator::new(doc.scale, factors)?;
    if faust.dims() != doc.dims {
        return Err(FaustError::dims(
            "FAµST document dims",
            format!("{:?}", faust.dims()),
            format!("{:?}", doc.dims),
        ));
    }
    Ok(faust)
}

pub fn read_faust(path: &Path) -> Result<FaustOperator> {
    faust_from_json(&fs::read_to_string(path)?)
}

pub fn write_faust(path: &Path, f: &FaustOperator) -> Result<()> {
    write_atomic(path, faust_to_json(f).as_bytes())
}
