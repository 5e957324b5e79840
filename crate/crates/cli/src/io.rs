//! CSV and JSON files.
//!
//! Data files hold one sample per row under a header of variable names.
//! Matrix files hold a dense `p × p` block under the same kind of header.
//! Numbers are written with 17 significant digits so that they round-trip.

use std::fs;
use std::path::Path;

use lassoggm::linalg::SymMatrix;
use lassoggm::model::DataMatrix;
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Header plus numeric rows; every row must have as many fields as the header.
pub fn read_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::io(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() {
        return Err(CliError::io(path, "missing header row"));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::io(path, e))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().map_err(|_| {
                    CliError::io(
                        path,
                        format!("row {}, column {}: not a number: {field:?}", line + 1, col + 1),
                    )
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_table(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> CliResult<()> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let fields: Vec<String> = row.into_iter().map(fmt_num).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads a data file and returns the variable names with the `p × n` matrix.
pub fn read_data(path: &Path) -> CliResult<(Vec<String>, DataMatrix)> {
    let (names, rows) = read_table(path)?;
    if rows.is_empty() {
        return Err(CliError::io(path, "no samples"));
    }
    let y = DataMatrix::from_samples(&rows).map_err(|e| CliError::io(path, e))?;
    Ok((names, y))
}

pub fn write_data(path: &Path, names: &[String], y: &DataMatrix) -> CliResult<()> {
    write_table(path, names, y.to_samples())
}

pub fn read_matrix(path: &Path) -> CliResult<(Vec<String>, SymMatrix)> {
    let (names, rows) = read_table(path)?;
    if rows.len() != names.len() {
        return Err(CliError::io(
            path,
            format!("expected {} rows for a square matrix, found {}", names.len(), rows.len()),
        ));
    }
    let m = SymMatrix::from_rows(&rows).map_err(|e| CliError::io(path, e))?;
    Ok((names, m))
}

pub fn write_matrix(path: &Path, names: &[String], m: &DMatrix<f64>) -> CliResult<()> {
    write_table(
        path,
        names,
        m.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()),
    )
}

pub fn write_rows(path: &Path, names: &[String], rows: &[Vec<f64>]) -> CliResult<()> {
    write_table(path, names, rows.iter().cloned())
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn numbers_round_trip_exactly(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn matrix_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = SymMatrix::from_rows(&[vec![1.0, 0.25], vec![0.25, 2.0 / 3.0]]).unwrap();
        let names = vec!["a".to_string(), "b".to_string()];
        write_matrix(&path, &names, m.as_matrix()).unwrap();
        let (back_names, back) = read_matrix(&path).unwrap();
        assert_eq!(back_names, names);
        assert_eq!(back, m);
    }

    #[test]
    fn bad_cell_names_its_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "x,y\n1,2\n3,oops\n").unwrap();
        let err = read_data(&path).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(err.to_string().contains("row 2, column 2"), "{err}");
    }
}
