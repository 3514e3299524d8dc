//! CSV input: comma-separated, '.' decimal, UTF-8, optional single header
//! line. Row and column numbers in errors are 1-based file positions.

use std::fs::File;
use std::path::Path;

use conflasso::Dataset;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("parse error at row {row}, column {column}: {token:?}")]
    Parse { row: usize, column: usize, token: String },
    #[error("non-finite value at row {row}, column {column}: {token:?}")]
    NonFiniteValue { row: usize, column: usize, token: String },
    #[error("{0}")]
    Shape(String),
}

/// Numeric table with all rows the same width.
pub fn read_matrix(path: &Path, header: bool) -> Result<DMatrix<f64>, IngestError> {
    let io = |e: &dyn std::fmt::Display| IngestError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let file = File::open(path).map_err(|e| io(&e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let first_row = if header { 2 } else { 1 };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = first_row + k;
        let record = record.map_err(|e| io(&e))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if let Some(width) = rows.first().map(Vec::len) {
            if record.len() != width {
                return Err(IngestError::Parse {
                    row,
                    column: record.len().min(width) + 1,
                    token: format!("expected {width} fields, found {}", record.len()),
                });
            }
        }
        let mut values = Vec::with_capacity(record.len());
        for (c, token) in record.iter().enumerate() {
            let v: f64 = token.parse().map_err(|_| IngestError::Parse {
                row,
                column: c + 1,
                token: token.to_string(),
            })?;
            if !v.is_finite() {
                return Err(IngestError::NonFiniteValue {
                    row,
                    column: c + 1,
                    token: token.to_string(),
                });
            }
            values.push(v);
        }
        rows.push(values);
    }
    let Some(width) = rows.first().map(Vec::len) else {
        return Err(IngestError::Shape(format!("{} has no data rows", path.display())));
    };
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

/// Training data; the last column is the response.
pub fn ingest_csv(path: &Path, header: bool) -> Result<Dataset, IngestError> {
    let m = read_matrix(path, header)?;
    if m.ncols() < 2 {
        return Err(IngestError::Shape(format!(
            "{} needs at least one covariate column and a response column",
            path.display()
        )));
    }
    let p = m.ncols() - 1;
    let x = m.columns(0, p).into_owned();
    let y = DVector::from_iterator(m.nrows(), m.column(p).iter().copied());
    let data = Dataset::new(x, y).map_err(|e| IngestError::Shape(e.to_string()))?;
    log::info!("read {} rows and {} covariates from {}", data.n(), data.p(), path.display());
    Ok(data)
}
