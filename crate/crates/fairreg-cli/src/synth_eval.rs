//! The `synth-eval` command: measure estimator quality against the
//! Monte-Carlo oracle over a grid of synthetic two-Gaussian scenarios.
//!
//! Every scenario contributes one oracle row (the Monte-Carlo ground truth
//! with its standard error) and one row per estimator (the plug-in estimate
//! from a finite sample, its error against the oracle and its wall time).

use crate::config::{estimator_by_id, SynthEvalConfig};
use crate::error::Result;
use crate::output::{resolve_out_dir, write_csv, write_resolved_config};
use crate::{output, svg};
use fairreg::data::{sample_scenario, scenario_grid, Scenario};
use fairreg::infometrics::{estimate_nmi, monte_carlo_mi, Criterion, MiTarget};
use fairreg::stats;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Instant;

/// One (scenario, estimator) measurement; the oracle appears as estimator
/// `"oracle"` with its standard error filled in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthEvalRow {
    pub scenario: usize,
    pub estimator: String,
    pub status: String,
    pub message: String,
    /// Mutual information in nats.
    pub mi: Option<f64>,
    /// Normalised mutual information `mi / H(A)`.
    pub nmi: Option<f64>,
    pub oracle_stderr: Option<f64>,
    /// `|nmi - oracle nmi|`; empty on oracle rows.
    pub abs_error: Option<f64>,
    pub wall_ms: Option<f64>,
}

/// Per-estimator aggregate across the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthEvalSummaryRow {
    pub estimator: String,
    pub n_ok: usize,
    pub n_failed: usize,
    /// Spearman rank correlation of the estimates against the oracle.
    pub spearman: Option<f64>,
    /// Mean absolute error of nmi against the oracle.
    pub mae: Option<f64>,
    pub total_wall_ms: f64,
}

pub struct SynthEvalOutcome {
    pub rows: Vec<SynthEvalRow>,
    pub summary: Vec<SynthEvalSummaryRow>,
    pub out_dir: PathBuf,
    pub rows_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub svg_path: Option<PathBuf>,
    pub n_failed: usize,
}

/// Entropy of the scenario's Bernoulli class in nats.
fn prior_entropy(sc: &Scenario) -> f64 {
    let p = sc.p;
    let mut h = 0.0;
    for q in [p, 1.0 - p] {
        if q > 0.0 {
            h -= q * q.ln();
        }
    }
    h
}

fn error_row(scenario: usize, estimator: &str, message: String) -> SynthEvalRow {
    SynthEvalRow {
        scenario,
        estimator: estimator.to_string(),
        status: "error".into(),
        message,
        mi: None,
        nmi: None,
        oracle_stderr: None,
        abs_error: None,
        wall_ms: None,
    }
}

/// Runs the study and writes `synth_eval.csv`, `synth_eval_summary.csv`,
/// `config.resolved.json` and optionally `synth_eval.svg`. A scenario whose
/// oracle or sample draw fails still emits its full set of rows, flagged as
/// errors, so row counts stay predictable.
pub fn run_synth_eval(
    config: &SynthEvalConfig,
    jobs: usize,
    render_svg: bool,
    out_dir_flag: Option<&str>,
) -> Result<SynthEvalOutcome> {
    config.validate()?;
    let out_dir = resolve_out_dir(out_dir_flag, config.out_dir.as_deref())?;
    write_resolved_config(&out_dir, "synth-eval", jobs, render_svg, config)?;

    let grid = scenario_grid(config.scenarios, config.grid_seed);

    let per_scenario: Vec<Vec<SynthEvalRow>> = output::with_jobs(jobs, || {
        grid.par_iter()
            .enumerate()
            .map(|(i, sc)| scenario_rows(config, i, sc))
            .collect()
    })?;
    let rows: Vec<SynthEvalRow> = per_scenario.into_iter().flatten().collect();

    let summary = summarise(config, &rows);
    let n_failed = rows.iter().filter(|r| r.status != "ok").count();

    let rows_csv = out_dir.join("synth_eval.csv");
    write_csv(&rows_csv, "synth-eval-v1", &rows)?;
    let summary_csv = out_dir.join("synth_eval_summary.csv");
    write_csv(&summary_csv, "synth-eval-summary-v1", &summary)?;

    let svg_path = if render_svg {
        let path = out_dir.join("synth_eval.svg");
        svg::write_synth_eval_svg(&path, &rows)?;
        Some(path)
    } else {
        None
    };

    Ok(SynthEvalOutcome { rows, summary, out_dir, rows_csv, summary_csv, svg_path, n_failed })
}

fn scenario_rows(config: &SynthEvalConfig, i: usize, sc: &Scenario) -> Vec<SynthEvalRow> {
    let mut rows = Vec::with_capacity(1 + config.estimators.len());
    // Distinct deterministic streams: the oracle must not share draws with
    // the sample the estimators see.
    let oracle_seed = config.sample_seed.wrapping_add(1_000_003).wrapping_add(i as u64);
    let data_seed = config.sample_seed.wrapping_add(i as u64);
    let h_a = prior_entropy(sc);

    let t0 = Instant::now();
    let oracle = monte_carlo_mi(sc, MiTarget::ScoreClass, config.oracle_samples, oracle_seed);
    let oracle_ms = t0.elapsed().as_secs_f64() * 1e3;
    let oracle_nmi = match &oracle {
        Ok((mi, stderr)) => {
            rows.push(SynthEvalRow {
                scenario: i,
                estimator: "oracle".into(),
                status: "ok".into(),
                message: String::new(),
                mi: Some(*mi),
                nmi: Some(mi / h_a),
                oracle_stderr: Some(*stderr),
                abs_error: None,
                wall_ms: Some(oracle_ms),
            });
            Some(mi / h_a)
        }
        Err(e) => {
            rows.push(error_row(i, "oracle", e.to_string()));
            None
        }
    };

    let sample = sample_scenario(sc, config.samples, data_seed);
    let (y, s, a) = match sample {
        Ok(t) => t,
        Err(e) => {
            for id in &config.estimators {
                rows.push(error_row(i, id, format!("sample draw failed: {e}")));
            }
            return rows;
        }
    };

    for id in &config.estimators {
        let backend = match estimator_by_id(id, data_seed) {
            Ok(b) => b,
            Err(e) => {
                rows.push(error_row(i, id, e.to_string()));
                continue;
            }
        };
        let t0 = Instant::now();
        match estimate_nmi(Criterion::Independence, &y, &s, &a, &backend) {
            Ok(est) => rows.push(SynthEvalRow {
                scenario: i,
                estimator: id.clone(),
                status: "ok".into(),
                message: String::new(),
                mi: Some(est.mi),
                nmi: Some(est.nmi),
                oracle_stderr: None,
                abs_error: oracle_nmi.map(|o| (est.nmi - o).abs()),
                wall_ms: Some(t0.elapsed().as_secs_f64() * 1e3),
            }),
            Err(e) => rows.push(error_row(i, id, e.to_string())),
        }
    }
    rows
}

fn summarise(config: &SynthEvalConfig, rows: &[SynthEvalRow]) -> Vec<SynthEvalSummaryRow> {
    let oracle_by_scenario: Vec<Option<f64>> = (0..config.scenarios)
        .map(|i| {
            rows.iter()
                .find(|r| r.scenario == i && r.estimator == "oracle" && r.status == "ok")
                .and_then(|r| r.nmi)
        })
        .collect();
    config
        .estimators
        .iter()
        .map(|id| {
            let of_est: Vec<&SynthEvalRow> =
                rows.iter().filter(|r| &r.estimator == id).collect();
            let n_ok = of_est.iter().filter(|r| r.status == "ok").count();
            let total_wall_ms: f64 = of_est.iter().filter_map(|r| r.wall_ms).sum();
            let mut est = Vec::new();
            let mut oracle = Vec::new();
            for r in &of_est {
                if let (Some(nmi), Some(o)) =
                    (r.nmi, oracle_by_scenario.get(r.scenario).copied().flatten())
                {
                    est.push(nmi);
                    oracle.push(o);
                }
            }
            let (spearman, mae) = if est.len() >= 3 {
                let mae = est
                    .iter()
                    .zip(&oracle)
                    .map(|(e, o)| (e - o).abs())
                    .sum::<f64>()
                    / est.len() as f64;
                (Some(stats::spearman(&est, &oracle)), Some(mae))
            } else {
                (None, None)
            };
            SynthEvalSummaryRow {
                estimator: id.clone(),
                n_ok,
                n_failed: of_est.len() - n_ok,
                spearman,
                mae,
                total_wall_ms,
            }
        })
        .collect()
}
