//! CSV matrix input and output.
//!
//! Input: comma separated, optional single header row (detected when some
//! field of the first row is not a number). Output: scientific notation with
//! 17 significant digits, which round-trips every `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use latentspec::Matrix;

use crate::CliError;

fn parse_field(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

/// Reads a numeric matrix, skipping a header row if present.
pub fn read_matrix(path: &Path) -> Result<Matrix, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Option<Vec<f64>> = rec.iter().map(parse_field).collect();
        match parsed {
            Some(row) => rows.push(row),
            None if i == 0 => continue,
            None => {
                return Err(CliError::parse(format!(
                    "{}: non-numeric field on line {}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::parse(format!("{}: no numeric rows", path.display())));
    }
    Matrix::from_rows(&rows).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))
}

/// Reads a vector stored either as one row or as one column.
pub fn read_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    let m = read_matrix(path)?;
    match m.shape() {
        (1, _) => Ok(m.into_vec()),
        (_, 1) => Ok(m.into_vec()),
        (r, c) => Err(CliError::parse(format!(
            "{}: expected a single row or column, got {r}x{c}",
            path.display()
        ))),
    }
}

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.16e}")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<(), CliError> {
    let mut w = create(path)?;
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|&x| fmt_f64(x)).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| CliError::io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(e.to_string()))
}

/// Writes a header row followed by records.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).map_err(|e| CliError::io(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(e.to_string()))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(e.to_string()))?;
    writeln!(w).map_err(|e| CliError::io(e.to_string()))?;
    w.flush().map_err(|e| CliError::io(e.to_string()))
}
