//! The `train` and `predict` commands: fit one model, serialise it with
//! everything needed to score new rows, and apply it to a feature CSV.

use crate::config::TrainSpec;
use crate::error::{CliError, Result};
use crate::output::{resolve_out_dir, write_resolved_config, TOOL_VERSION};
use fairreg::training::{predict_with, r_squared, train, TrainingConfig};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Identifier of the model JSON layout.
pub const MODEL_FORMAT: &str = "fairreg-model-v1";

/// A trained model with its preprocessing, ready to score raw feature rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    /// Always [`MODEL_FORMAT`]; checked on load.
    pub format: String,
    pub tool_version: String,
    /// Feature weights followed by the intercept.
    pub theta: Vec<f64>,
    /// Input columns, in the order the weights expect.
    pub feature_names: Vec<String>,
    /// Column-wise standardisation applied before the dot product.
    pub scaler_means: Vec<f64>,
    pub scaler_stds: Vec<f64>,
    /// Original sensitive labels by class index (informational).
    pub class_labels: Vec<String>,
    pub training: TrainingConfig,
    pub converged: bool,
    /// Training-set coefficient of determination.
    pub r2_train: f64,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<ModelFile> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let model: ModelFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if model.format != MODEL_FORMAT {
            return Err(CliError::Config(format!(
                "{}: unsupported model format '{}' (expected '{MODEL_FORMAT}')",
                path.display(),
                model.format
            )));
        }
        let p = model.feature_names.len();
        if model.theta.len() != p + 1 || model.scaler_means.len() != p || model.scaler_stds.len() != p
        {
            return Err(CliError::Config(format!(
                "{}: inconsistent model (|theta| = {}, {} features)",
                path.display(),
                model.theta.len(),
                p
            )));
        }
        Ok(model)
    }

    /// Scores already-standardised feature rows.
    pub fn score_standardised(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let theta = DVector::from_column_slice(&self.theta);
        Ok(predict_with(&theta, x)?)
    }

    /// Standardises raw rows with the stored scaler, then scores them.
    pub fn score_raw(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let mut z = x.clone();
        for c in 0..z.ncols() {
            for r in 0..z.nrows() {
                z[(r, c)] = (z[(r, c)] - self.scaler_means[c]) / self.scaler_stds[c];
            }
        }
        self.score_standardised(&z)
    }
}

pub struct TrainOutcome {
    pub model: ModelFile,
    pub model_path: PathBuf,
    pub out_dir: PathBuf,
}

/// Trains per the spec and writes the model JSON plus the resolved config.
pub fn run_train(spec: &TrainSpec, out_dir_flag: Option<&str>) -> Result<TrainOutcome> {
    spec.validate()?;
    let out_dir = resolve_out_dir(out_dir_flag, spec.out_dir.as_deref())?;
    write_resolved_config(&out_dir, "train", 1, false, spec)?;

    let loaded = spec.dataset.load()?;
    let ds = &loaded.dataset;
    let lambda_w = spec.lambda_w.resolve(ds)?;
    let mut tc = TrainingConfig::new(lambda_w, spec.lambda_f, spec.regulariser.clone());
    if let Some(opt) = spec.optimiser {
        tc.optimiser = opt;
    }
    tc.init_seed = spec.init_seed;
    tc.n_starts = spec.n_starts;

    let fitted = train(ds, &tc)?;
    let scores = fairreg::training::predict(&fitted, &ds.features)?;
    let r2_train = r_squared(&ds.target, &scores);

    let model = ModelFile {
        format: MODEL_FORMAT.into(),
        tool_version: TOOL_VERSION.into(),
        theta: fitted.theta.iter().copied().collect(),
        feature_names: ds.feature_names.clone(),
        scaler_means: loaded.scaler_means,
        scaler_stds: loaded.scaler_stds,
        class_labels: loaded.class_labels,
        training: tc,
        converged: fitted.converged,
        r2_train,
    };
    let model_path = out_dir.join(&spec.model_name);
    let text = serde_json::to_string_pretty(&model)?;
    std::fs::write(&model_path, text + "\n").map_err(|e| CliError::io(&model_path, e))?;

    Ok(TrainOutcome { model, model_path, out_dir })
}

pub struct PredictOutcome {
    pub scores: Vec<f64>,
    pub output_csv: PathBuf,
}

/// Reads a feature CSV, checks it contains every column the model was
/// trained on (extra columns are ignored), scores each row with the stored
/// scaler and weights, and writes a predictions CSV.
pub fn run_predict(model_path: &Path, input_csv: &Path, output_csv: &Path) -> Result<PredictOutcome> {
    let model = ModelFile::load(model_path)?;

    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(input_csv)
        .map_err(|e| CliError::Config(format!("{}: {e}", input_csv.display())))?;
    let headers = reader.headers()?.clone();
    let mut col_of = Vec::with_capacity(model.feature_names.len());
    let mut missing = Vec::new();
    for name in &model.feature_names {
        match headers.iter().position(|h| h == name) {
            Some(idx) => col_of.push(idx),
            None => missing.push(name.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Config(format!(
            "{}: missing feature columns {:?} required by the model",
            input_csv.display(),
            missing
        )));
    }

    let mut raw: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for (j, &idx) in col_of.iter().enumerate() {
            let cell = record.get(idx).unwrap_or("");
            let value: f64 = cell.trim().parse().map_err(|_| {
                CliError::Config(format!(
                    "{}: row {}, column '{}': cannot parse '{}' as a number",
                    input_csv.display(),
                    line + 2,
                    model.feature_names[j],
                    cell
                ))
            })?;
            raw.push(value);
        }
        n += 1;
    }
    let x = DMatrix::from_row_slice(n, model.feature_names.len(), &raw);
    let scores = model.score_raw(&x)?;

    let mut file = std::fs::File::create(output_csv).map_err(|e| CliError::io(output_csv, e))?;
    writeln!(file, "# fairreg {TOOL_VERSION} predictions-v1").map_err(|e| CliError::io(output_csv, e))?;
    writeln!(file, "row,score").map_err(|e| CliError::io(output_csv, e))?;
    for (i, s) in scores.iter().enumerate() {
        writeln!(file, "{i},{s}").map_err(|e| CliError::io(output_csv, e))?;
    }

    Ok(PredictOutcome { scores: scores.iter().copied().collect(), output_csv: output_csv.to_path_buf() })
}
