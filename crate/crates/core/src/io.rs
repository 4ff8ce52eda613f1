//! Plain-text matrix and label formats.
//!
//! Matrices are headered CSV: a first line `rows,cols`, then exactly `rows`
//! comma-separated lines of `cols` values. Labels are one integer per line.
//! Anything after the declared content other than blank lines is rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_header(path: &Path, line: Option<&str>) -> Result<(usize, usize)> {
    let line = line.ok_or_else(|| parse_err(path, 1, "missing `rows,cols` header"))?;
    let mut parts = line.trim().split(',');
    let mut field = || -> Result<usize> {
        parts
            .next()
            .map(str::trim)
            .ok_or_else(|| parse_err(path, 1, "header must be `rows,cols`"))?
            .parse::<usize>()
            .map_err(|e| parse_err(path, 1, format!("bad header: {e}")))
    };
    let rows = field()?;
    let cols = field()?;
    if parts.next().is_some() {
        return Err(parse_err(path, 1, "trailing fields in header"));
    }
    Ok((rows, cols))
}

fn parse_row<T: FromStr>(path: &Path, line_no: usize, line: &str, cols: usize) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let mut out = Vec::with_capacity(cols);
    for tok in line.trim_end_matches('\r').split(',') {
        let v = tok
            .trim()
            .parse::<T>()
            .map_err(|e| parse_err(path, line_no, format!("bad value `{tok}`: {e}")))?;
        out.push(v);
    }
    if out.len() != cols {
        return Err(Error::ShapeMismatch(format!(
            "{}:{line_no}: {} values, header declares {cols}",
            path.display(),
            out.len()
        )));
    }
    Ok(out)
}

fn reject_trailing<'a>(path: &Path, lines: impl Iterator<Item = (usize, &'a str)>) -> Result<()> {
    for (i, l) in lines {
        if !l.trim().is_empty() {
            return Err(parse_err(path, i + 1, "trailing data after declared rows"));
        }
    }
    Ok(())
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads a headered real-valued CSV matrix. Non-finite entries are errors.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (rows, cols) = parse_header(path, lines.next().map(|(_, l)| l))?;
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (i, line) = lines
            .next()
            .ok_or_else(|| Error::ShapeMismatch(format!("{}: expected {rows} rows, found {r}", path.display())))?;
        let vals: Vec<f64> = parse_row(path, i + 1, line, cols)?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                path: path.to_path_buf(),
                row: r,
            });
        }
        data.extend(vals);
    }
    reject_trailing(path, lines)?;
    Matrix::from_vec(rows, cols, data)
}

/// Reads a headered integer CSV matrix (used for vote matrices).
pub fn read_int_matrix_csv(path: &Path) -> Result<(usize, usize, Vec<i64>)> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (rows, cols) = parse_header(path, lines.next().map(|(_, l)| l))?;
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (i, line) = lines
            .next()
            .ok_or_else(|| Error::ShapeMismatch(format!("{}: expected {rows} rows, found {r}", path.display())))?;
        data.extend(parse_row::<i64>(path, i + 1, line, cols)?);
    }
    reject_trailing(path, lines)?;
    Ok((rows, cols, data))
}

pub fn format_matrix_csv(m: &Matrix) -> String {
    let mut s = format!("{},{}\n", m.rows(), m.cols());
    for row in m.iter_rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            // `{:?}` round-trips f64 exactly
            let _ = write!(s, "{v:?}");
        }
        s.push('\n');
    }
    s
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, format_matrix_csv(m)).map_err(|e| Error::io(path, e))
}

/// Reads one non-negative integer label per line, checking `< classes`.
pub fn read_labels(path: &Path, classes: usize) -> Result<Vec<usize>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    let last = lines
        .iter()
        .rposition(|l| !l.trim().is_empty())
        .map_or(0, |p| p + 1);
    for (i, line) in lines[..last].iter().enumerate() {
        let v: i64 = line
            .trim()
            .parse()
            .map_err(|e| parse_err(path, i + 1, format!("bad label `{line}`: {e}")))?;
        if v < 0 || v as usize >= classes {
            return Err(Error::LabelOutOfRange {
                path: path.to_path_buf(),
                row: i,
                label: v,
                classes,
            });
        }
        out.push(v as usize);
    }
    Ok(out)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut s = String::with_capacity(labels.len() * 2);
    for l in labels {
        let _ = writeln!(s, "{l}");
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}
