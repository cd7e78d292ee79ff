//! `fairreg` binary: subcommand dispatch, flag overrides and exit codes.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use fairreg_cli::config::read_config;
use fairreg_cli::{
    run_bench, run_predict, run_sweep, run_synth_eval, BenchConfig, CliError, SweepConfig,
    SynthEvalConfig, TrainSpec,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fairreg",
    version,
    about = "Fair-regression experiments: frontier sweeps, estimator studies, benchmarks, train/predict",
    after_help = "Exit codes: 0 success, 1 config error, 2 partial failure (some sub-jobs failed; \
                  their rows are flagged in the output CSVs). The default output directory is \
                  $FAIRREG_OUT_DIR, falling back to the current directory."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Accuracy–fairness frontier: train at every λ_f across CV folds.
    Sweep {
        /// JSON config (see SweepConfig).
        #[arg(long)]
        config: PathBuf,
        /// Override the λ_f list, comma-separated, sorted ascending.
        #[arg(long, value_delimiter = ',')]
        lambda_f: Option<Vec<f64>>,
        /// Override the fold count.
        #[arg(long)]
        folds: Option<usize>,
        /// Worker threads for (λ_f, fold) jobs; 0 = all cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Also render frontier.svg.
        #[arg(long)]
        svg: bool,
        /// Output directory (overrides config and $FAIRREG_OUT_DIR).
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Estimator quality against the Monte-Carlo oracle on synthetic scenarios.
    SynthEval {
        /// JSON config (see SynthEvalConfig); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the scenario count.
        #[arg(long)]
        scenarios: Option<usize>,
        /// Override the per-scenario sample size.
        #[arg(long)]
        samples: Option<usize>,
        /// Override the Monte-Carlo oracle draw count.
        #[arg(long)]
        oracle_samples: Option<usize>,
        /// Override the estimator list, comma-separated.
        #[arg(long, value_delimiter = ',')]
        estimators: Option<Vec<String>>,
        /// Worker threads for per-scenario jobs; 0 = all cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Also render synth_eval.svg.
        #[arg(long)]
        svg: bool,
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Wall-time scaling of penalised training across dataset sizes.
    Bench {
        /// JSON config (see BenchConfig); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the size list, comma-separated, sorted ascending.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Override the method list, comma-separated (e.g. lspc-ind-identity,berk-individual).
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Override the λ_f list, comma-separated.
        #[arg(long, value_delimiter = ',')]
        lambda_f: Option<Vec<f64>>,
        /// Override the per-cell time budget in seconds.
        #[arg(long)]
        timeout_seconds: Option<f64>,
        /// Override the fixed optimiser iteration budget per fit.
        #[arg(long)]
        fixed_iters: Option<usize>,
        /// Override the repeats per cell.
        #[arg(long)]
        repeats: Option<usize>,
        /// Also render bench.svg.
        #[arg(long)]
        svg: bool,
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Fit one model and write it as JSON.
    Train {
        /// JSON config (see TrainSpec).
        #[arg(long)]
        config: PathBuf,
        /// Override the model file name inside the output directory.
        #[arg(long)]
        model_name: Option<String>,
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Score a feature CSV with a trained model.
    Predict {
        /// Model JSON written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Input CSV; must contain every feature column the model expects.
        #[arg(long)]
        input: PathBuf,
        /// Output predictions CSV.
        #[arg(long)]
        output: PathBuf,
    },
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Sweep { config, lambda_f, folds, jobs, svg, out_dir } => {
            let mut cfg: SweepConfig = read_config(&config)?;
            if let Some(grid) = lambda_f {
                cfg.sweep = grid;
            }
            if let Some(f) = folds {
                cfg.folds = f;
            }
            let outcome = run_sweep(&cfg, jobs, svg, out_dir.as_deref())?;
            println!(
                "sweep: {} rows ({} failed), lambda_w = {}, wrote {}",
                outcome.rows.len(),
                outcome.n_failed,
                outcome.lambda_w,
                outcome.frontier_csv.display()
            );
            for row in &outcome.summary {
                println!(
                    "  lambda_f = {:>8}: r2 = {}, nmi_ind = {}, nmi_sep = {}, nmi_suf = {}",
                    row.lambda_f,
                    fmt_opt(row.r2_mean),
                    fmt_opt(row.nmi_ind_mean),
                    fmt_opt(row.nmi_sep_mean),
                    fmt_opt(row.nmi_suf_mean)
                );
            }
            partial(outcome.n_failed, outcome.rows.len())
        }
        Command::SynthEval {
            config,
            scenarios,
            samples,
            oracle_samples,
            estimators,
            jobs,
            svg,
            out_dir,
        } => {
            let mut cfg: SynthEvalConfig = match config {
                Some(path) => read_config(&path)?,
                None => serde_json::from_str("{}").expect("all fields default"),
            };
            if let Some(v) = scenarios {
                cfg.scenarios = v;
            }
            if let Some(v) = samples {
                cfg.samples = v;
            }
            if let Some(v) = oracle_samples {
                cfg.oracle_samples = v;
            }
            if let Some(v) = estimators {
                cfg.estimators = v;
            }
            let outcome = run_synth_eval(&cfg, jobs, svg, out_dir.as_deref())?;
            println!(
                "synth-eval: {} rows ({} failed), wrote {}",
                outcome.rows.len(),
                outcome.n_failed,
                outcome.rows_csv.display()
            );
            for row in &outcome.summary {
                println!(
                    "  {:>14}: spearman = {}, mae = {}, wall = {:.0} ms",
                    row.estimator,
                    fmt_opt(row.spearman),
                    fmt_opt(row.mae),
                    row.total_wall_ms
                );
            }
            partial(outcome.n_failed, outcome.rows.len())
        }
        Command::Bench {
            config,
            sizes,
            methods,
            lambda_f,
            timeout_seconds,
            fixed_iters,
            repeats,
            svg,
            out_dir,
        } => {
            let mut cfg: BenchConfig = match config {
                Some(path) => read_config(&path)?,
                None => BenchConfig::default(),
            };
            if let Some(v) = sizes {
                cfg.sizes = v;
            }
            if let Some(v) = methods {
                cfg.methods = v;
            }
            if let Some(v) = lambda_f {
                cfg.lambda_f = v;
            }
            if let Some(v) = timeout_seconds {
                cfg.timeout_seconds = v;
            }
            if let Some(v) = fixed_iters {
                cfg.fixed_iters = v;
            }
            if let Some(v) = repeats {
                cfg.repeats = v;
            }
            let outcome = run_bench(&cfg, svg, out_dir.as_deref())?;
            println!(
                "bench: {} rows ({} failed), wrote {}",
                outcome.rows.len(),
                outcome.n_failed,
                outcome.rows_csv.display()
            );
            for row in &outcome.summary {
                println!(
                    "  {:>18} lambda_f = {:>6}: slope = {} over {} sizes",
                    row.method,
                    row.lambda_f,
                    fmt_opt(row.slope),
                    row.n_sizes
                );
            }
            partial(outcome.n_failed, outcome.rows.len())
        }
        Command::Train { config, model_name, out_dir } => {
            let mut spec: TrainSpec = read_config(&config)?;
            if let Some(name) = model_name {
                spec.model_name = name;
            }
            let outcome = fairreg_cli::run_train(&spec, out_dir.as_deref())?;
            println!(
                "{}",
                serde_json::json!({
                    "model": outcome.model_path.display().to_string(),
                    "r2_train": outcome.model.r2_train,
                    "converged": outcome.model.converged,
                    "lambda_w": outcome.model.training.lambda_w,
                    "lambda_f": outcome.model.training.lambda_f,
                })
            );
            Ok(())
        }
        Command::Predict { model, input, output } => {
            let outcome = run_predict(&model, &input, &output)?;
            println!("predict: wrote {} scores to {}", outcome.scores.len(), output.display());
            Ok(())
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "-".into(),
    }
}

fn partial(failed: usize, total: usize) -> Result<(), CliError> {
    if failed > 0 {
        Err(CliError::Partial { failed, total })
    } else {
        Ok(())
    }
}

fn main() -> ExitCode {
    // Clap's own error exit code (2) collides with "partial failure", so
    // parse errors are remapped to the config-error code 1; help/version
    // remain successes.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
