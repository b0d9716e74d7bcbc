//! Matrix Market coordinate format, read and write.
//!
//! Indices are 1-based on disk and 0-based everywhere else. Symmetric and
//! skew-symmetric storage is expanded to a full matrix, duplicates are
//! summed, and stored zeros are dropped.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::precision::Element;
use crate::sparse::{CooEntry, CsrMatrix};

/// Largest row or column count accepted by [`parse_matrix_market`].
pub const DEFAULT_MAX_DIM: usize = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_header(line: &str) -> Result<(Field, Symmetry)> {
    let toks: Vec<String> = line.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if toks.first().map(String::as_str) != Some("%%matrixmarket") {
        return Err(parse_err(1, "missing %%MatrixMarket banner"));
    }
    if toks.len() != 5 {
        return Err(parse_err(1, format!("banner needs 5 fields, found {}", toks.len())));
    }
    if toks[1] != "matrix" {
        return Err(parse_err(1, format!("unsupported object `{}`", toks[1])));
    }
    if toks[2] != "coordinate" {
        return Err(parse_err(1, format!("unsupported format `{}` (only coordinate)", toks[2])));
    }
    let field = match toks[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        other => return Err(parse_err(1, format!("unsupported field `{other}`"))),
    };
    let symmetry = match toks[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(parse_err(1, format!("unsupported symmetry `{other}`"))),
    };
    Ok((field, symmetry))
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse::<usize>().map_err(|_| parse_err(line, format!("{what} `{tok}` is not a non-negative integer")))
}

/// Parses a Matrix Market coordinate file into a canonical FP64 matrix.
pub fn parse_matrix_market(text: &[u8]) -> Result<CsrMatrix<f64>> {
    parse_matrix_market_with_limit(text, DEFAULT_MAX_DIM)
}

/// Like [`parse_matrix_market`] but rejects declared dimensions above
/// `max_dim`.
pub fn parse_matrix_market_with_limit(text: &[u8], max_dim: usize) -> Result<CsrMatrix<f64>> {
    let mut lines = text.split(|&b| b == b'\n').enumerate().map(|(i, raw)| {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        (i + 1, std::str::from_utf8(raw).map_err(|_| parse_err(i + 1, "invalid UTF-8")))
    });

    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(parse_err(1, "empty input")),
    };
    let (field, symmetry) = parse_header(header)?;

    // Size line: first non-comment, non-blank line.
    let mut size = None;
    for (ln, l) in lines.by_ref() {
        let l = l?;
        let t = l.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(ln, "size line must be `rows cols nnz`"));
        }
        let nrows = parse_usize(toks[0], ln, "row count")?;
        let ncols = parse_usize(toks[1], ln, "column count")?;
        let nnz = parse_usize(toks[2], ln, "entry count")?;
        if nrows > max_dim || ncols > max_dim {
            return Err(parse_err(ln, format!("dimensions {nrows}x{ncols} exceed limit {max_dim}")));
        }
        if symmetry != Symmetry::General && nrows != ncols {
            return Err(parse_err(ln, "symmetric storage requires a square matrix"));
        }
        size = Some((ln, nrows, ncols, nnz));
        break;
    }
    let (size_line, nrows, ncols, declared) = size.ok_or_else(|| parse_err(1, "missing size line"))?;

    let mut entries: Vec<CooEntry<f64>> = Vec::with_capacity(declared.min(text.len() / 4 + 1) * 2);
    let mut seen = 0usize;
    let mut last_line = size_line;
    for (ln, l) in lines {
        let l = l?;
        last_line = ln;
        let t = l.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        if seen == declared {
            return Err(parse_err(ln, format!("more entries than the declared {declared}")));
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        let want = if field == Field::Pattern { 2 } else { 3 };
        if toks.len() != want {
            return Err(parse_err(ln, format!("expected {want} fields, found {}", toks.len())));
        }
        let i = parse_usize(toks[0], ln, "row index")?;
        let j = parse_usize(toks[1], ln, "column index")?;
        if i == 0 || i > nrows || j == 0 || j > ncols {
            return Err(parse_err(ln, format!("index ({i}, {j}) outside 1..={nrows} x 1..={ncols}")));
        }
        let v = match field {
            Field::Pattern => 1.0,
            Field::Integer => toks[2]
                .parse::<i64>()
                .map(|v| v as f64)
                .map_err(|_| parse_err(ln, format!("value `{}` is not an integer", toks[2])))?,
            Field::Real => {
                let v = toks[2]
                    .parse::<f64>()
                    .map_err(|_| parse_err(ln, format!("value `{}` is not numeric", toks[2])))?;
                if !v.is_finite() {
                    return Err(parse_err(ln, format!("value `{}` is not finite", toks[2])));
                }
                v
            }
        };
        let (r, c) = (i - 1, j - 1);
        entries.push(CooEntry { row: r, col: c, val: v });
        if r != c {
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => entries.push(CooEntry { row: c, col: r, val: v }),
                Symmetry::SkewSymmetric => entries.push(CooEntry { row: c, col: r, val: -v }),
            }
        }
        seen += 1;
    }
    if seen != declared {
        return Err(parse_err(last_line, format!("found {seen} entries, declared {declared}")));
    }
    CsrMatrix::from_coo(nrows, ncols, &entries)
}

/// Writes a general real coordinate file. Values use the shortest decimal
/// form that round-trips exactly.
pub fn write_matrix_market<T: Element>(m: &CsrMatrix<T>) -> String {
    let mut out = String::with_capacity(64 + m.nnz() * 24);
    out.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", m.nrows(), m.ncols(), m.nnz());
    for e in m.iter() {
        let _ = writeln!(out, "{} {} {}", e.row + 1, e.col + 1, e.val.to_f64());
    }
    out
}
