//! CSV matrices and atomic file output.
//!
//! Numbers are written with Rust's shortest round-trip representation, so
//! every emitted matrix parses back bit for bit.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, Result};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn parses(cell: &str) -> bool {
    cell.trim().parse::<f64>().is_ok()
}

/// Read a numeric matrix. A first row whose cells are all non-numeric is
/// taken as a header. Row and column numbers in errors are 1-based and count
/// data rows only.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| input_error(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| input_error(path, e))?;
        if first {
            first = false;
            if record.iter().all(|c| !parses(c)) {
                continue;
            }
        }
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        let row_no = rows.len() + 1;
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(CliError::Input(format!(
                "{}: row {row_no} has {} columns, expected {w}",
                path.display(),
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(w);
        for (c, cell) in record.iter().enumerate() {
            let text = cell.trim();
            let v: f64 = text.parse().map_err(|_| {
                CliError::Input(format!(
                    "{}: row {row_no}, column {}: cannot parse {text:?} as a number",
                    path.display(),
                    c + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Input(format!(
                    "{}: row {row_no}, column {}: non-finite value {text:?}",
                    path.display(),
                    c + 1
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }
    let w = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), w, |i, j| rows[i][j]))
}

/// Read a single row or single column as a vector.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() == 1 || m.nrows() == 1 {
        Ok(m.iter().copied().collect())
    } else {
        Err(CliError::Input(format!(
            "{}: expected a single row or column, got {}x{}",
            path.display(),
            m.nrows(),
            m.ncols()
        )))
    }
}

fn input_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Input(format!("{}: {other:?}", path.display())),
    }
}

/// Column names `prefix_1, …, prefix_n`.
pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

/// Render a header row and string rows as CSV text.
pub fn csv_text(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let to_err = |e: csv::Error| CliError::Input(format!("csv encoding failed: {e}"));
    if !header.is_empty() {
        w.write_record(header).map_err(to_err)?;
    }
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Input(format!("csv encoding failed: {e}")))
}

pub fn matrix_csv(m: &DMatrix<f64>, prefix: &str) -> Result<Vec<u8>> {
    if m.ncols() == 0 {
        return Ok(Vec::new());
    }
    let rows: Vec<Vec<String>> = m
        .row_iter()
        .map(|r| r.iter().map(|&v| fmt_f64(v)).collect())
        .collect();
    csv_text(&numbered(prefix, m.ncols()), &rows)
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}
