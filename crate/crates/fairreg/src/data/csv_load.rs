//! CSV ingestion: column selection, missing-value filtering, sensitive-class
//! coding and feature standardisation.

use super::{Dataset, Standardizer};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

/// Names the special columns of an input CSV. All remaining columns are
/// treated as numeric features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Regression target column.
    pub target: String,
    /// Categorical sensitive-attribute column.
    pub sensitive: String,
    /// Columns to ignore entirely.
    #[serde(default)]
    pub drop: Vec<String>,
    /// When true, the (dense-coded) sensitive attribute is appended as an
    /// extra feature column. Off by default: the sensitive attribute is not
    /// a model input unless explicitly requested.
    #[serde(default)]
    pub include_sensitive_feature: bool,
}

/// A loaded dataset plus everything needed to reproduce the preprocessing on
/// new data.
#[derive(Debug, Clone)]
pub struct CsvLoad {
    pub dataset: Dataset,
    /// Standardisation statistics fitted on the loaded rows, in the order of
    /// `dataset.feature_names`.
    pub scaler: Standardizer,
    /// Rows removed because of missing values.
    pub dropped_rows: usize,
    /// Constant feature columns removed, by name.
    pub dropped_columns: Vec<String>,
    /// Original sensitive label for each class index.
    pub class_labels: Vec<String>,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || matches!(t.to_ascii_lowercase().as_str(), "na" | "nan" | "?" | "null")
}

/// Reads a CSV with a header row, producing a standardised [`Dataset`].
///
/// Rows containing missing values (empty cells, `NA`, `NaN`, `?`, `null`,
/// case-insensitive) are dropped and counted. A non-missing cell that fails
/// to parse as a number in a feature or target column is an error — a text
/// column must be listed in `schema.drop`. The sensitive column is treated
/// as categorical; its distinct values are sorted and coded `0..k`. Constant
/// feature columns are removed (recorded in `dropped_columns`) and the rest
/// are standardised to zero mean and unit variance.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<CsvLoad> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let target_idx = find(&schema.target)?;
    let sensitive_idx = find(&schema.sensitive)?;
    let mut drop_idx = BTreeSet::new();
    for d in &schema.drop {
        drop_idx.insert(find(d)?);
    }
    drop_idx.insert(target_idx);
    drop_idx.insert(sensitive_idx);
    let feature_idx: Vec<usize> = (0..headers.len()).filter(|i| !drop_idx.contains(i)).collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut dropped_rows = 0usize;

    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        let cells: Vec<&str> = record.iter().collect();
        // A missing value in any used column (target, sensitive, features)
        // drops the row; dropped columns are never inspected.
        let used = [target_idx, sensitive_idx];
        if used
            .iter()
            .chain(feature_idx.iter())
            .map(|&i| cells.get(i).copied().unwrap_or(""))
            .any(is_missing)
        {
            dropped_rows += 1;
            continue;
        }
        let parse = |i: usize| -> Result<f64> {
            let raw = cells.get(i).copied().unwrap_or("");
            raw.trim().parse::<f64>().map_err(|_| Error::NonNumericCell {
                row: row_no + 1,
                column: headers[i].clone(),
                value: raw.to_string(),
            })
        };
        targets.push(parse(target_idx)?);
        let mut feats = Vec::with_capacity(feature_idx.len());
        for &i in &feature_idx {
            feats.push(parse(i)?);
        }
        rows.push(feats);
        labels.push(cells[sensitive_idx].trim().to_string());
    }

    if rows.is_empty() {
        return Err(Error::NoRows);
    }

    // Dense class coding in sorted label order (independent of row order).
    let classes: Vec<String> = {
        let set: BTreeSet<&String> = labels.iter().collect();
        set.into_iter().cloned().collect()
    };
    if classes.len() < 2 {
        return Err(Error::TooFewClasses(classes.len()));
    }
    let sensitive: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label in class set"))
        .collect();

    let n = rows.len();
    let mut names: Vec<String> = feature_idx.iter().map(|&i| headers[i].clone()).collect();
    let mut raw = DMatrix::from_fn(n, names.len(), |r, c| rows[r][c]);
    if schema.include_sensitive_feature {
        raw = raw.insert_column(names.len(), 0.0);
        let c = raw.ncols() - 1;
        for r in 0..n {
            raw[(r, c)] = sensitive[r] as f64;
        }
        names.push(schema.sensitive.clone());
    }

    // Remove constant columns before standardising.
    let mut dropped_columns = Vec::new();
    let mut keep = Vec::new();
    for (c, name) in names.iter().enumerate() {
        let col = raw.column(c);
        let first = col[0];
        if col.iter().all(|&v| (v - first).abs() < 1e-12) {
            dropped_columns.push(name.clone());
        } else {
            keep.push(c);
        }
    }
    let kept = DMatrix::from_fn(n, keep.len(), |r, c| raw[(r, keep[c])]);
    let kept_names: Vec<String> = keep.iter().map(|&c| names[c].clone()).collect();

    let (scaler, standardised) = Standardizer::fit_transform(&kept);
    let dataset = Dataset::new(standardised, DVector::from_vec(targets), sensitive, kept_names)?;
    Ok(CsvLoad { dataset, scaler, dropped_rows, dropped_columns, class_labels: classes })
}
