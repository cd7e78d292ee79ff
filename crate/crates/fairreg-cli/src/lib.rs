//! Command-line experiments for the `fairreg` library.
//!
//! Five subcommands tie the library into reproducible experiment artifacts:
//!
//! * `sweep` — accuracy–fairness frontier over λ_f across CV folds.
//! * `synth-eval` — estimator quality against the Monte-Carlo oracle on a
//!   grid of synthetic scenarios.
//! * `bench` — wall-time scaling of penalised training across dataset sizes.
//! * `train` / `predict` — fit one model to JSON, score feature CSVs.
//!
//! Every run is driven by a JSON config plus flag overrides, copies its
//! resolved config into the output directory, writes schema-versioned
//! append-safe CSVs, and is deterministic given its seeds except for
//! wall-time fields. Sub-job failures become rows, not crashes; exit codes
//! are 0 (success), 1 (config error) and 2 (partial failure).
//!
//! Commands are plain library functions (`run_sweep`, `run_synth_eval`,
//! `run_bench`, `run_train`, `run_predict`) returning structured outcomes,
//! so tests and other tools can drive them without spawning processes.

pub mod bench;
pub mod config;
pub mod error;
pub mod model_io;
pub mod output;
pub mod svg;
pub mod sweep;
pub mod synth_eval;

pub use bench::{run_bench, BenchOutcome};
pub use config::{BenchConfig, DatasetSource, LambdaW, SweepConfig, SynthEvalConfig, TrainSpec};
pub use error::{CliError, Result};
pub use model_io::{run_predict, run_train, ModelFile, MODEL_FORMAT};
pub use output::{OUT_DIR_ENV, TOOL_VERSION};
pub use sweep::{run_sweep, SweepOutcome};
pub use synth_eval::{run_synth_eval, SynthEvalOutcome};
