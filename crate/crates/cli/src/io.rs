//! Dataset CSV interchange.
//!
//! Format: header row with d feature columns named `f1..fd` followed by a
//! final `label` column in {0,1}; decimal point, comma separator, UTF-8.
//! Floats are written in shortest round-trip form, so write-then-read
//! reproduces a dataset exactly.

use std::path::Path;

use lpo_knn::{Dataset, LabeledPoint};

use crate::CliError;

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::input(format!("bad header: {e}")))?
        .clone();
    if headers.len() < 2 {
        return Err(CliError::input("need at least one feature column and a label column"));
    }
    let d = headers.len() - 1;
    for (i, name) in headers.iter().take(d).enumerate() {
        let expected = format!("f{}", i + 1);
        if name != expected {
            return Err(CliError::input(format!(
                "column {} is named {name:?}, expected {expected:?}",
                i + 1
            )));
        }
    }
    if headers.iter().nth(d) != Some("label") {
        return Err(CliError::input("final column must be named \"label\""));
    }
    let mut points = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::input(format!("row {}: {e}", row + 2)))?;
        if record.len() != d + 1 {
            return Err(CliError::input(format!(
                "row {}: expected {} fields, got {}",
                row + 2,
                d + 1,
                record.len()
            )));
        }
        let mut features = Vec::with_capacity(d);
        for (col, field) in record.iter().take(d).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::input(format!("row {}, column f{}: bad number {field:?}", row + 2, col + 1))
            })?;
            features.push(v);
        }
        let label: u8 = match record.iter().nth(d).map(str::trim) {
            Some("0") => 0,
            Some("1") => 1,
            other => {
                return Err(CliError::input(format!(
                    "row {}: label must be 0 or 1, got {other:?}",
                    row + 2
                )))
            }
        };
        points.push(
            LabeledPoint::new(features, label)
                .map_err(|e| CliError::input(format!("row {}: {e}", row + 2)))?,
        );
    }
    Dataset::new(points).map_err(|e| CliError::input(e.to_string()))
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), CliError> {
    let mut out = String::new();
    for j in 1..=dataset.dimension() {
        out.push_str(&format!("f{j},"));
    }
    out.push_str("label\n");
    for i in 0..dataset.len() {
        for v in dataset.features(i) {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{}\n", dataset.label(i)));
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}
