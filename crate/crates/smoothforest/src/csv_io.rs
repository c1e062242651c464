//! Comma-separated datasets: an optional header row, decimal floats, UTF-8.

use std::path::Path;

use smoothforest_core::datasets::Dataset;

use crate::error::{read_file, write_file, IoError, Result};

/// Which columns hold features and label. Column indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub has_header: bool,
    /// `None` selects the last column.
    pub label_column: Option<usize>,
    /// `None` selects every column except the label.
    pub feature_columns: Option<Vec<usize>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema { has_header: true, label_column: None, feature_columns: None }
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    parse_csv(&read_file(path)?, schema)
}

/// Errors cite 1-based file lines and columns.
pub fn parse_csv(text: &str, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut header: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut columns: Option<(usize, Vec<usize>)> = None;

    for record in reader.records() {
        let record = record.map_err(|e| IoError::CsvFormat(e.to_string()))?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(IoError::Csv {
                    row,
                    column: record.len().min(w) + 1,
                    reason: format!("expected {w} fields, found {}", record.len()),
                })
            }
            Some(_) => {}
        }
        let (label_col, feature_cols) = match &columns {
            Some(c) => c.clone(),
            None => {
                let c = resolve_columns(schema, record.len())?;
                columns = Some(c.clone());
                c
            }
        };
        if schema.has_header && header.is_none() {
            header = Some(feature_cols.iter().map(|&c| record[c].trim().to_string()).collect());
            continue;
        }
        let cell = |c: usize| -> Result<f64> {
            let s = record[c].trim();
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(IoError::Csv { row, column: c + 1, reason: format!("{s:?} is not a finite number") }),
            }
        };
        features.push(feature_cols.iter().map(|&c| cell(c)).collect::<Result<Vec<f64>>>()?);
        labels.push(cell(label_col)?);
    }
    let mut ds = Dataset::new(features, labels)?;
    ds.feature_names = header;
    Ok(ds)
}

fn resolve_columns(schema: &CsvSchema, width: usize) -> Result<(usize, Vec<usize>)> {
    if width < 2 {
        return Err(IoError::CsvFormat("need at least one feature column and a label column".into()));
    }
    let label = schema.label_column.unwrap_or(width - 1);
    let features = schema.feature_columns.clone().unwrap_or_else(|| (0..width).filter(|&c| c != label).collect());
    if let Some(&bad) = features.iter().chain([&label]).find(|&&c| c >= width) {
        return Err(IoError::CsvFormat(format!("column {} does not exist; rows have {width} fields", bad + 1)));
    }
    Ok((label, features))
}

/// Features then label; floats use the shortest representation that parses
/// back to the same value.
pub fn format_csv(data: &Dataset) -> String {
    let mut out = String::new();
    let names: Vec<String> =
        data.feature_names.clone().unwrap_or_else(|| (0..data.dim()).map(|i| format!("x{}", i + 1)).collect());
    out.push_str(&names.join(","));
    out.push_str(",label\n");
    for (row, y) in data.features.iter().zip(&data.labels) {
        for v in row {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{y}\n"));
    }
    out
}

pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    write_file(path, format_csv(data).as_bytes())
}
