//! The `bench` command: wall-time scaling of penalised training across
//! dataset sizes.
//!
//! Each cell (method, size, λ_f) times `repeats` full fits with a fixed
//! optimiser iteration budget, so the measured time is proportional to the
//! per-iteration cost of the penalty — the quantity whose growth with N the
//! benchmark is after. Jobs always run sequentially (parallel timing would
//! contaminate the measurements); the summary reports per-cell medians and
//! a per-method log-log slope of median time against N.

use crate::config::{parse_method, BenchConfig};
use crate::error::Result;
use crate::output::{resolve_out_dir, write_csv, write_resolved_config};
use crate::svg;
use fairreg::data::{scenario_regression_dataset, subsample, Scenario};
use fairreg::stats;
use fairreg::training::{train, OptimiserConfig, TrainingConfig};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Instant;

/// One timed fit (or a skipped placeholder after a timeout).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub n: usize,
    pub lambda_f: f64,
    pub repeat: usize,
    pub status: String,
    pub message: String,
    pub wall_seconds: Option<f64>,
    pub iterations: Option<usize>,
}

/// Median wall time per (method, λ_f, size) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchMedianRow {
    pub method: String,
    pub lambda_f: f64,
    pub n: usize,
    pub n_ok: usize,
    pub median_seconds: Option<f64>,
}

/// Log-log slope of median time against N per (method, λ_f).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchSummaryRow {
    pub method: String,
    pub lambda_f: f64,
    /// Slope of `ln median_seconds` against `ln N`; 1 means linear cost,
    /// 2 quadratic. Empty when fewer than two sizes finished.
    pub slope: Option<f64>,
    pub n_sizes: usize,
}

pub struct BenchOutcome {
    pub rows: Vec<BenchRow>,
    pub medians: Vec<BenchMedianRow>,
    pub summary: Vec<BenchSummaryRow>,
    pub out_dir: PathBuf,
    pub rows_csv: PathBuf,
    pub medians_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub svg_path: Option<PathBuf>,
    pub n_failed: usize,
}

/// The fixed dependence structure all benchmark fits see: a moderately
/// group-correlated scenario, so every penalty has real work to do.
fn bench_scenario() -> Scenario {
    Scenario {
        p: 0.5,
        mean0: [0.0, 0.0],
        mean1: [1.0, 1.2],
        cov0: [[1.0, 0.3], [0.3, 1.0]],
        cov1: [[1.0, 0.3], [0.3, 1.0]],
    }
}

/// Runs the benchmark and writes `bench.csv`, `bench_medians.csv`,
/// `bench_summary.csv`, `config.resolved.json` and optionally `bench.svg`.
/// Once a cell's total measured time exceeds `timeout_seconds`, its
/// remaining repeats and all larger sizes for the same (method, λ_f) are
/// recorded as skipped rows and the run continues.
pub fn run_bench(config: &BenchConfig, render_svg: bool, out_dir_flag: Option<&str>) -> Result<BenchOutcome> {
    config.validate()?;
    let out_dir = resolve_out_dir(out_dir_flag, config.out_dir.as_deref())?;
    write_resolved_config(&out_dir, "bench", 1, render_svg, config)?;

    let max_n = *config.sizes.last().expect("validated non-empty");
    let full = scenario_regression_dataset(&bench_scenario(), max_n, config.n_noise, config.scenario_seed)?;

    let mut rows = Vec::new();
    for method in &config.methods {
        let regulariser = parse_method(method)?;
        for &lambda_f in &config.lambda_f {
            let mut timed_out = false;
            for &n in &config.sizes {
                if timed_out {
                    for repeat in 0..config.repeats {
                        rows.push(skipped(method, n, lambda_f, repeat, "earlier size exceeded the time budget"));
                    }
                    continue;
                }
                let subset = if n == max_n {
                    full.clone()
                } else {
                    subsample(&full, n, config.scenario_seed.wrapping_add(n as u64))?
                };
                let tc = TrainingConfig {
                    lambda_w: config.lambda_w,
                    lambda_f,
                    regulariser: regulariser.clone(),
                    optimiser: OptimiserConfig {
                        max_iter: config.fixed_iters,
                        grad_tol: 0.0,
                        history_size: 10,
                    },
                    init: Default::default(),
                    init_seed: 0,
                    n_starts: 1,
                };
                let mut cell_seconds = 0.0;
                for repeat in 0..config.repeats {
                    if cell_seconds > config.timeout_seconds {
                        rows.push(skipped(method, n, lambda_f, repeat, "cell exceeded the time budget"));
                        timed_out = true;
                        continue;
                    }
                    let t0 = Instant::now();
                    let fit = train(&subset, &tc);
                    let wall = t0.elapsed().as_secs_f64();
                    cell_seconds += wall;
                    match fit {
                        Ok(model) => rows.push(BenchRow {
                            method: method.clone(),
                            n,
                            lambda_f,
                            repeat,
                            status: "ok".into(),
                            message: String::new(),
                            wall_seconds: Some(wall),
                            iterations: Some(model.train_loss_trace.len().saturating_sub(1)),
                        }),
                        Err(e) => rows.push(BenchRow {
                            method: method.clone(),
                            n,
                            lambda_f,
                            repeat,
                            status: "error".into(),
                            message: e.to_string(),
                            wall_seconds: Some(wall),
                            iterations: None,
                        }),
                    }
                }
                if cell_seconds > config.timeout_seconds {
                    timed_out = true;
                }
            }
        }
    }

    let (medians, summary) = summarise(config, &rows);
    let n_failed = rows.iter().filter(|r| r.status == "error").count();

    let rows_csv = out_dir.join("bench.csv");
    write_csv(&rows_csv, "bench-v1", &rows)?;
    let medians_csv = out_dir.join("bench_medians.csv");
    write_csv(&medians_csv, "bench-medians-v1", &medians)?;
    let summary_csv = out_dir.join("bench_summary.csv");
    write_csv(&summary_csv, "bench-summary-v1", &summary)?;

    let svg_path = if render_svg {
        let path = out_dir.join("bench.svg");
        svg::write_bench_svg(&path, &medians)?;
        Some(path)
    } else {
        None
    };

    Ok(BenchOutcome {
        rows,
        medians,
        summary,
        out_dir,
        rows_csv,
        medians_csv,
        summary_csv,
        svg_path,
        n_failed,
    })
}

fn skipped(method: &str, n: usize, lambda_f: f64, repeat: usize, why: &str) -> BenchRow {
    BenchRow {
        method: method.to_string(),
        n,
        lambda_f,
        repeat,
        status: "skipped".into(),
        message: why.to_string(),
        wall_seconds: None,
        iterations: None,
    }
}

fn summarise(config: &BenchConfig, rows: &[BenchRow]) -> (Vec<BenchMedianRow>, Vec<BenchSummaryRow>) {
    let mut medians = Vec::new();
    let mut summary = Vec::new();
    for method in &config.methods {
        for &lambda_f in &config.lambda_f {
            let mut ns = Vec::new();
            let mut meds = Vec::new();
            for &n in &config.sizes {
                let times: Vec<f64> = rows
                    .iter()
                    .filter(|r| {
                        &r.method == method && r.lambda_f == lambda_f && r.n == n && r.status == "ok"
                    })
                    .filter_map(|r| r.wall_seconds)
                    .collect();
                let median = if times.is_empty() { None } else { Some(stats::median(&times)) };
                if let Some(m) = median {
                    if m > 0.0 {
                        ns.push(n as f64);
                        meds.push(m);
                    }
                }
                medians.push(BenchMedianRow {
                    method: method.clone(),
                    lambda_f,
                    n,
                    n_ok: times.len(),
                    median_seconds: median,
                });
            }
            let slope =
                if ns.len() >= 2 { Some(stats::log_log_slope(&ns, &meds)) } else { None };
            summary.push(BenchSummaryRow {
                method: method.clone(),
                lambda_f,
                slope,
                n_sizes: ns.len(),
            });
        }
    }
    (medians, summary)
}
