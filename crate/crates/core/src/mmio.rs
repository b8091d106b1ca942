//! Matrix Market coordinate I/O (`real`, `general` or `symmetric`).
//!
//! Indices are 1-based on disk and 0-based in memory. Symmetric files store
//! the lower triangle and are expanded on read; duplicate entries are summed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{AmgError, Result};
use crate::sparse::CsrMatrix;

fn mm_err(line: usize, message: impl Into<String>) -> AmgError {
    AmgError::MatrixMarket { line, message: message.into() }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    parse_matrix_market(BufReader::new(File::open(path)?))
}

pub fn parse_matrix_market<R: Read>(reader: R) -> Result<CsrMatrix> {
    let mut lines = BufReader::new(reader).lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| mm_err(1, "empty file"))?;
    let header = header?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
        return Err(mm_err(1, format!("malformed header `{header}`")));
    }
    if tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(mm_err(1, "only `matrix coordinate` files are supported"));
    }
    if tokens[3] != "real" {
        return Err(mm_err(1, format!("unsupported field `{}` (expected real)", tokens[3])));
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(mm_err(1, format!("unsupported symmetry `{other}`"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    let mut read_entries = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(mm_err(lineno, "size line must be `rows cols nnz`"));
                }
                let parse = |s: &str| s.parse::<usize>().map_err(|_| mm_err(lineno, format!("bad integer `{s}`")));
                let (r, c, nz) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
                if symmetric && r != c {
                    return Err(mm_err(lineno, "symmetric matrix must be square"));
                }
                triplets.reserve(if symmetric { 2 * nz } else { nz });
                size = Some((r, c, nz));
            }
            Some((rows, cols, nz)) => {
                if fields.len() != 3 {
                    return Err(mm_err(lineno, "entry line must be `row col value`"));
                }
                if read_entries == nz {
                    return Err(mm_err(lineno, "more entries than declared"));
                }
                let index = |s: &str, bound: usize| -> Result<usize> {
                    let v = s.parse::<usize>().map_err(|_| mm_err(lineno, format!("bad index `{s}`")))?;
                    if v == 0 || v > bound {
                        return Err(mm_err(lineno, format!("index {v} outside 1..={bound}")));
                    }
                    Ok(v - 1)
                };
                let i = index(fields[0], rows)?;
                let j = index(fields[1], cols)?;
                let v: f64 = fields[2].parse().map_err(|_| mm_err(lineno, format!("bad value `{}`", fields[2])))?;
                if !v.is_finite() {
                    return Err(mm_err(lineno, "non-finite value"));
                }
                triplets.push((i, j, v));
                if symmetric && i != j {
                    triplets.push((j, i, v));
                }
                read_entries += 1;
            }
        }
    }
    let (rows, cols, nz) = size.ok_or_else(|| mm_err(1, "missing size line"))?;
    if read_entries != nz {
        return Err(mm_err(0, format!("declared {nz} entries, found {read_entries}")));
    }
    let mut m = CsrMatrix::from_triplets(rows, cols, &triplets)?;
    let sym = symmetric || m.is_symmetric();
    m.set_symmetric_flag(sym);
    Ok(m)
}

/// Writes `a` as `symmetric` (lower triangle) when flagged symmetric, `general` otherwise.
///
/// Values use Rust's shortest round-trip formatting, so reading the file back
/// reproduces the matrix bit for bit.
pub fn write_matrix_market(a: &CsrMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_matrix_market_to(a, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_matrix_market_to<W: Write>(a: &CsrMatrix, out: &mut W) -> Result<()> {
    let symmetric = a.is_flagged_symmetric() && a.is_symmetric();
    let keep = |i: usize, j: usize| !symmetric || j <= i;
    let count = (0..a.n_rows())
        .map(|i| a.row(i).0.iter().filter(|&&j| keep(i, j)).count())
        .sum::<usize>();
    writeln!(
        out,
        "%%MatrixMarket matrix coordinate real {}",
        if symmetric { "symmetric" } else { "general" }
    )?;
    writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), count)?;
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if keep(i, j) {
                writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
            }
        }
    }
    Ok(())
}
