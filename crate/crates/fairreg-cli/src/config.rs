//! Run configurations: JSON-file schemas for every subcommand, flag-override
//! merging, validation and dataset materialisation.
//!
//! Each run is driven by a single JSON config file; command-line flags
//! override individual fields. The fully resolved config is copied into the
//! output directory (`config.resolved.json`) so a run can always be
//! reproduced from its artifacts.

use crate::error::{CliError, Result};
use fairreg::data::{load_csv, scenario_regression_dataset, CsvSchema, Dataset, Scenario};
use fairreg::infometrics::EstimatorBackend;
use fairreg::training::{r_squared, ridge_solution, OptimiserConfig, Regulariser};
use fairreg::{data, stats};
use serde::{Deserialize, Serialize};
use std::path::Path;

fn default_n_starts() -> usize {
    1
}

/// Where the rows come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSource {
    /// A CSV file on disk; `schema` names the target and sensitive columns.
    Csv { path: String, schema: CsvSchema },
    /// A synthetic regression dataset drawn from a two-Gaussian scenario:
    /// the scenario's score component is the informative feature, padded
    /// with `n_noise` standard-normal nuisance columns.
    Synthetic {
        scenario: Scenario,
        n: usize,
        #[serde(default)]
        n_noise: usize,
        #[serde(default)]
        seed: u64,
    },
}

/// A materialised dataset plus the preprocessing needed to score new rows.
pub struct LoadedData {
    pub dataset: Dataset,
    /// Standardisation fitted on the raw CSV columns; identity for
    /// synthetic sources (those are generated pre-standardised).
    pub scaler_means: Vec<f64>,
    pub scaler_stds: Vec<f64>,
    /// Original sensitive labels by class index ("0"/"1" for synthetic).
    pub class_labels: Vec<String>,
}

impl DatasetSource {
    pub fn load(&self) -> Result<LoadedData> {
        match self {
            DatasetSource::Csv { path, schema } => {
                let load = load_csv(path, schema)?;
                Ok(LoadedData {
                    dataset: load.dataset,
                    scaler_means: load.scaler.means,
                    scaler_stds: load.scaler.stds,
                    class_labels: load.class_labels,
                })
            }
            DatasetSource::Synthetic { scenario, n, n_noise, seed } => {
                let dataset = scenario_regression_dataset(scenario, *n, *n_noise, *seed)?;
                let p = dataset.p();
                let k = dataset.k;
                Ok(LoadedData {
                    dataset,
                    scaler_means: vec![0.0; p],
                    scaler_stds: vec![1.0; p],
                    class_labels: (0..k).map(|c| c.to_string()).collect(),
                })
            }
        }
    }
}

/// Ridge weight: fixed, or selected by inner cross-validation on held-out
/// R² with the fairness term switched off.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LambdaW {
    Fixed { value: f64 },
    Cv {
        grid: Vec<f64>,
        #[serde(default = "default_cv_folds")]
        folds: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_cv_folds() -> usize {
    5
}

impl Default for LambdaW {
    fn default() -> Self {
        LambdaW::Fixed { value: 1e-2 }
    }
}

impl LambdaW {
    pub fn validate(&self) -> Result<()> {
        match self {
            LambdaW::Fixed { value } => {
                if !value.is_finite() || *value < 0.0 {
                    return Err(CliError::Config(format!(
                        "lambda_w must be finite and >= 0, got {value}"
                    )));
                }
            }
            LambdaW::Cv { grid, folds, .. } => {
                if grid.is_empty() {
                    return Err(CliError::Config("lambda_w CV grid is empty".into()));
                }
                if grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(CliError::Config("lambda_w CV grid needs finite values >= 0".into()));
                }
                if *folds < 2 {
                    return Err(CliError::Config("lambda_w CV needs at least 2 folds".into()));
                }
            }
        }
        Ok(())
    }

    /// Resolves to a concrete value; CV picks the grid point with the best
    /// mean held-out R² of the plain ridge fit (ties go to the smaller
    /// value, preferring the stronger prior).
    pub fn resolve(&self, ds: &Dataset) -> Result<f64> {
        match self {
            LambdaW::Fixed { value } => Ok(*value),
            LambdaW::Cv { grid, folds, seed } => {
                let assignment = data::kfold(ds.n(), *folds, *seed)?;
                let mut best: Option<(f64, f64)> = None; // (mean r2, lambda)
                for &lw in grid {
                    let mut scores = Vec::with_capacity(*folds);
                    for fold in 0..*folds {
                        let (train_idx, test_idx) = assignment.split(fold);
                        let train = ds.subset(&train_idx);
                        let test = ds.subset(&test_idx);
                        let theta = ridge_solution(&train.features, &train.target, lw)?;
                        let pred = fairreg::training::predict_with(&theta, &test.features)?;
                        scores.push(r_squared(&test.target, &pred));
                    }
                    let mean = stats::mean(&scores);
                    let better = match best {
                        None => true,
                        Some((b, _)) => mean > b,
                    };
                    if better {
                        best = Some((mean, lw));
                    }
                }
                Ok(best.expect("non-empty grid").1)
            }
        }
    }
}

fn default_eval_backend() -> EstimatorBackend {
    EstimatorBackend::lr_rks(0)
}

fn default_folds() -> usize {
    5
}

fn default_regulariser() -> Regulariser {
    Regulariser::lspc(
        fairreg::infometrics::Criterion::Independence,
        fairreg::lspc::BasisKind::FeatureCross,
    )
}

/// Config for `sweep`: a fairness-strength frontier over cross-validation
/// folds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dataset: DatasetSource,
    /// Fairness weights λ_f to sweep, sorted strictly ascending.
    pub sweep: Vec<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub fold_seed: u64,
    #[serde(default)]
    pub lambda_w: LambdaW,
    #[serde(default = "default_regulariser")]
    pub regulariser: Regulariser,
    /// Backend used to measure dependence on the held-out fold. Defaults to
    /// the random-Fourier-feature classifier, which shares no structure
    /// with the penalties being trained against.
    #[serde(default = "default_eval_backend")]
    pub eval_backend: EstimatorBackend,
    #[serde(default)]
    pub optimiser: Option<OptimiserConfig>,
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default = "default_n_starts")]
    pub n_starts: usize,
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweep.is_empty() {
            return Err(CliError::Config("sweep list must be non-empty".into()));
        }
        if self.sweep.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CliError::Config("sweep values must be finite and >= 0".into()));
        }
        if self.sweep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config(format!(
                "sweep values must be sorted strictly ascending, got {:?}",
                self.sweep
            )));
        }
        if self.folds < 2 {
            return Err(CliError::Config(format!("folds must be >= 2, got {}", self.folds)));
        }
        if self.n_starts == 0 {
            return Err(CliError::Config("n_starts must be >= 1".into()));
        }
        self.lambda_w.validate()
    }
}

fn default_scenarios() -> usize {
    100
}

fn default_samples() -> usize {
    10_000
}

fn default_oracle_samples() -> usize {
    200_000
}

fn default_estimators() -> Vec<String> {
    ["lspc-linear", "lspc-quad", "logistic-quad", "lr-rks"]
        .into_iter()
        .map(String::from)
        .collect()
}

/// Config for `synth-eval`: estimator quality against the Monte-Carlo
/// oracle over a grid of synthetic scenarios.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthEvalConfig {
    #[serde(default = "default_scenarios")]
    pub scenarios: usize,
    #[serde(default)]
    pub grid_seed: u64,
    /// Sample size each estimator sees per scenario.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub sample_seed: u64,
    /// Monte-Carlo draws for the oracle value per scenario.
    #[serde(default = "default_oracle_samples")]
    pub oracle_samples: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<String>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl SynthEvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenarios == 0 {
            return Err(CliError::Config("scenarios must be >= 1".into()));
        }
        if self.samples < 10 {
            return Err(CliError::Config("samples must be >= 10".into()));
        }
        if self.oracle_samples < 100 {
            return Err(CliError::Config("oracle_samples must be >= 100".into()));
        }
        if self.estimators.is_empty() {
            return Err(CliError::Config("estimators list must be non-empty".into()));
        }
        for id in &self.estimators {
            estimator_by_id(id, 0)?;
        }
        Ok(())
    }
}

/// Maps an estimator id to a backend; the kitchen-sinks backend draws its
/// random features from `seed`.
pub fn estimator_by_id(id: &str, seed: u64) -> Result<EstimatorBackend> {
    match id {
        "lspc-linear" => Ok(EstimatorBackend::lspc_linear()),
        "lspc-quad" => Ok(EstimatorBackend::lspc_quad()),
        "logistic-quad" => Ok(EstimatorBackend::logistic_quad()),
        "lr-rks" => Ok(EstimatorBackend::lr_rks(seed)),
        other => Err(CliError::Config(format!(
            "unknown estimator '{other}' (expected lspc-linear, lspc-quad, logistic-quad or lr-rks)"
        ))),
    }
}

fn default_sizes() -> Vec<usize> {
    vec![500, 1000, 2000, 4000, 8000, 16000]
}

fn default_bench_methods() -> Vec<String> {
    vec!["lspc-ind-identity".into(), "berk-individual".into()]
}

fn default_bench_lambda_f() -> Vec<f64> {
    vec![1.0]
}

fn default_bench_lambda_w() -> f64 {
    1e-2
}

fn default_fixed_iters() -> usize {
    12
}

fn default_repeats() -> usize {
    3
}

fn default_timeout() -> f64 {
    600.0
}

fn default_bench_noise() -> usize {
    3
}

/// Config for `bench`: wall-time scaling of penalised training across
/// dataset sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Subset sizes, sorted strictly ascending.
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    /// Regulariser labels, e.g. `lspc-ind-identity`, `lspc-sep-cross`,
    /// `logistic-ind`, `berk-group`, `berk-individual`, `none`.
    #[serde(default = "default_bench_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_bench_lambda_f")]
    pub lambda_f: Vec<f64>,
    #[serde(default = "default_bench_lambda_w")]
    pub lambda_w: f64,
    /// Optimiser iteration budget per fit. A fixed budget makes wall time
    /// proportional to per-iteration cost, which is the quantity whose
    /// scaling the benchmark measures.
    #[serde(default = "default_fixed_iters")]
    pub fixed_iters: usize,
    /// Fits per (method, size, λ_f) cell; the summary takes the median.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Wall-time budget per cell. Jobs are never interrupted mid-fit: once
    /// a cell's total measured time exceeds the budget, the remaining
    /// repeats and all larger sizes of the same method are recorded as
    /// skipped rows and the run continues with the next method.
    #[serde(default = "default_timeout")]
    pub timeout_seconds: f64,
    #[serde(default)]
    pub scenario_seed: u64,
    #[serde(default = "default_bench_noise")]
    pub n_noise: usize,
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: default_sizes(),
            methods: default_bench_methods(),
            lambda_f: default_bench_lambda_f(),
            lambda_w: default_bench_lambda_w(),
            fixed_iters: default_fixed_iters(),
            repeats: default_repeats(),
            timeout_seconds: default_timeout(),
            scenario_seed: 0,
            n_noise: default_bench_noise(),
            out_dir: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(CliError::Config("sizes must be non-empty".into()));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config("sizes must be sorted strictly ascending".into()));
        }
        if self.sizes[0] < 20 {
            return Err(CliError::Config("smallest size must be >= 20".into()));
        }
        if self.methods.is_empty() {
            return Err(CliError::Config("methods must be non-empty".into()));
        }
        for m in &self.methods {
            parse_method(m)?;
        }
        if self.lambda_f.is_empty() || self.lambda_f.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CliError::Config("lambda_f must be non-empty, finite and >= 0".into()));
        }
        if !self.lambda_w.is_finite() || self.lambda_w < 0.0 {
            return Err(CliError::Config("lambda_w must be finite and >= 0".into()));
        }
        if self.fixed_iters == 0 {
            return Err(CliError::Config("fixed_iters must be >= 1".into()));
        }
        if self.repeats == 0 {
            return Err(CliError::Config("repeats must be >= 1".into()));
        }
        if !(self.timeout_seconds > 0.0) {
            return Err(CliError::Config("timeout_seconds must be > 0".into()));
        }
        Ok(())
    }
}

/// Parses a benchmark method label into a regulariser. Labels mirror
/// [`Regulariser::label`]: `lspc-{ind,sep,suf}-{identity,cross}`,
/// `logistic-{ind,sep,suf}`, `berk-group`, `berk-individual`, `none`.
pub fn parse_method(label: &str) -> Result<Regulariser> {
    use fairreg::infometrics::Criterion;
    use fairreg::lspc::BasisKind;
    let criterion = |tag: &str| -> Result<Criterion> {
        match tag {
            "ind" => Ok(Criterion::Independence),
            "sep" => Ok(Criterion::Separation),
            "suf" => Ok(Criterion::Sufficiency),
            other => Err(CliError::Config(format!("unknown criterion tag '{other}'"))),
        }
    };
    let parts: Vec<&str> = label.split('-').collect();
    match parts.as_slice() {
        ["none"] => Ok(Regulariser::None),
        ["berk", "group"] => Ok(Regulariser::BerkGroup { bandwidth: None }),
        ["berk", "individual"] => Ok(Regulariser::BerkIndividual { bandwidth: None }),
        ["logistic", c] => Ok(Regulariser::logistic(criterion(c)?)),
        ["lspc", c, "identity"] => Ok(Regulariser::lspc(criterion(c)?, BasisKind::Identity)),
        ["lspc", c, "cross"] => Ok(Regulariser::lspc(criterion(c)?, BasisKind::FeatureCross)),
        _ => Err(CliError::Config(format!(
            "unknown method '{label}' (expected lspc-<crit>-<basis>, logistic-<crit>, berk-group, berk-individual or none)"
        ))),
    }
}

/// Config for `train`: fit one model and serialise it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSpec {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub lambda_w: LambdaW,
    #[serde(default)]
    pub lambda_f: f64,
    #[serde(default = "default_regulariser")]
    pub regulariser: Regulariser,
    #[serde(default)]
    pub optimiser: Option<OptimiserConfig>,
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default = "default_n_starts")]
    pub n_starts: usize,
    /// File name of the model JSON inside the output directory.
    #[serde(default = "default_model_name")]
    pub model_name: String,
    #[serde(default)]
    pub out_dir: Option<String>,
}

fn default_model_name() -> String {
    "model.json".into()
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda_f.is_finite() || self.lambda_f < 0.0 {
            return Err(CliError::Config("lambda_f must be finite and >= 0".into()));
        }
        if self.n_starts == 0 {
            return Err(CliError::Config("n_starts must be >= 1".into()));
        }
        if self.model_name.trim().is_empty() {
            return Err(CliError::Config("model_name must be non-empty".into()));
        }
        self.lambda_w.validate()
    }
}

/// Reads and deserialises a JSON config file.
pub fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
