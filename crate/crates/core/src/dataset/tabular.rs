use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn parse_f64(field: &str, line: u64, path: &Path) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{}:{line}: not a number: {field:?}", path.display())))
}

/// Load a CSV with a header row. The label column defaults to the last one;
/// labels must be non-negative integers. No range is declared, so
/// normalization min-max scales each feature.
pub fn load_csv(path: &Path, label_column: Option<usize>) -> Result<Dataset> {
    let mut rdr = reader(path)?;
    let width = rdr.headers()?.len();
    if width < 2 {
        return Err(Error::Config(format!(
            "{}: need at least one feature column and a label column",
            path.display()
        )));
    }
    let label_col = label_column.unwrap_or(width - 1);
    if label_col >= width {
        return Err(Error::Config(format!(
            "label column {label_col} out of range for {width} columns"
        )));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                found: record.len(),
            });
        }
        for (j, field) in record.iter().enumerate() {
            if j == label_col {
                let label = field.trim().parse::<usize>().map_err(|_| {
                    Error::Config(format!("{}:{line}: bad label {field:?}", path.display()))
                })?;
                labels.push(label);
            } else {
                features.push(parse_f64(field, line, path)?);
            }
        }
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(
        features,
        width - 1,
        labels,
        n_classes,
        None,
        format!("csv:{}", path.display()),
    )
}

/// Numeric rows of a headed CSV; a column named `label` is skipped.
pub fn read_feature_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = reader(path)?;
    let skip: Vec<bool> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().eq_ignore_ascii_case("label"))
        .collect();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .zip(&skip)
            .filter(|(_, &s)| !s)
            .map(|(f, _)| parse_f64(f, line, path))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}
