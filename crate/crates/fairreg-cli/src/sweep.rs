//! The `sweep` command: trace an accuracy–fairness frontier by training at
//! every fairness weight λ_f across cross-validation folds.

use crate::config::SweepConfig;
use crate::error::Result;
use crate::output::{resolve_out_dir, write_csv, write_resolved_config};
use crate::{output, svg};
use fairreg::data::kfold;
use fairreg::stats;
use fairreg::training::{evaluate_fold, TrainingConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// One (λ_f, fold) result; failed folds carry the error message and empty
/// metric cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda_f: f64,
    pub fold: usize,
    pub status: String,
    pub message: String,
    pub r2: Option<f64>,
    pub nmi_ind: Option<f64>,
    pub nmi_sep: Option<f64>,
    pub nmi_suf: Option<f64>,
    pub estimator: String,
    pub train_seconds: Option<f64>,
    pub converged: Option<bool>,
}

/// Per-λ_f aggregate over the folds that succeeded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub lambda_f: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub r2_mean: Option<f64>,
    pub r2_sd: Option<f64>,
    pub nmi_ind_mean: Option<f64>,
    pub nmi_ind_sd: Option<f64>,
    pub nmi_sep_mean: Option<f64>,
    pub nmi_suf_mean: Option<f64>,
    pub train_seconds_total: f64,
}

pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummaryRow>,
    pub lambda_w: f64,
    pub out_dir: PathBuf,
    pub frontier_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub svg_path: Option<PathBuf>,
    pub n_failed: usize,
}

/// Runs the sweep and writes `frontier.csv`, `frontier_summary.csv`,
/// `config.resolved.json` and optionally `frontier.svg` into the output
/// directory. Fold failures become rows, not errors; the caller decides the
/// exit code from `n_failed`.
pub fn run_sweep(
    config: &SweepConfig,
    jobs: usize,
    render_svg: bool,
    out_dir_flag: Option<&str>,
) -> Result<SweepOutcome> {
    config.validate()?;
    let out_dir = resolve_out_dir(out_dir_flag, config.out_dir.as_deref())?;
    write_resolved_config(&out_dir, "sweep", jobs, render_svg, config)?;

    let loaded = config.dataset.load()?;
    let ds = loaded.dataset;
    let lambda_w = config.lambda_w.resolve(&ds)?;
    let folds = kfold(ds.n(), config.folds, config.fold_seed)?;

    let mut job_list = Vec::with_capacity(config.sweep.len() * config.folds);
    for &lambda_f in &config.sweep {
        for fold in 0..config.folds {
            job_list.push((lambda_f, fold));
        }
    }

    let rows: Vec<SweepRow> = output::with_jobs(jobs, || {
        job_list
            .par_iter()
            .map(|&(lambda_f, fold)| {
                let mut tc = TrainingConfig::new(lambda_w, lambda_f, config.regulariser.clone());
                if let Some(opt) = config.optimiser {
                    tc.optimiser = opt;
                }
                tc.init_seed = config.init_seed;
                tc.n_starts = config.n_starts;
                match evaluate_fold(&ds, &folds, fold, &tc, &config.eval_backend) {
                    Ok(pt) => SweepRow {
                        lambda_f,
                        fold,
                        status: "ok".into(),
                        message: String::new(),
                        r2: Some(pt.r2),
                        nmi_ind: Some(pt.nmi_ind),
                        nmi_sep: Some(pt.nmi_sep),
                        nmi_suf: Some(pt.nmi_suf),
                        estimator: pt.estimator_id,
                        train_seconds: Some(pt.train_seconds),
                        converged: Some(pt.converged),
                    },
                    Err(e) => SweepRow {
                        lambda_f,
                        fold,
                        status: "error".into(),
                        message: e.to_string(),
                        r2: None,
                        nmi_ind: None,
                        nmi_sep: None,
                        nmi_suf: None,
                        estimator: config.eval_backend.id(),
                        train_seconds: None,
                        converged: None,
                    },
                }
            })
            .collect()
    })?;

    let summary = summarise(&config.sweep, &rows);
    let n_failed = rows.iter().filter(|r| r.status != "ok").count();

    let frontier_csv = out_dir.join("frontier.csv");
    write_csv(&frontier_csv, "frontier-v1", &rows)?;
    let summary_csv = out_dir.join("frontier_summary.csv");
    write_csv(&summary_csv, "frontier-summary-v1", &summary)?;

    let svg_path = if render_svg {
        let path = out_dir.join("frontier.svg");
        svg::write_frontier_svg(&path, &summary)?;
        Some(path)
    } else {
        None
    };

    Ok(SweepOutcome {
        rows,
        summary,
        lambda_w,
        out_dir,
        frontier_csv,
        summary_csv,
        svg_path,
        n_failed,
    })
}

fn summarise(sweep: &[f64], rows: &[SweepRow]) -> Vec<SweepSummaryRow> {
    sweep
        .iter()
        .map(|&lambda_f| {
            let at: Vec<&SweepRow> = rows.iter().filter(|r| r.lambda_f == lambda_f).collect();
            let ok: Vec<&&SweepRow> = at.iter().filter(|r| r.status == "ok").collect();
            let col = |get: fn(&SweepRow) -> Option<f64>| -> Vec<f64> {
                ok.iter().filter_map(|r| get(r)).collect()
            };
            let r2 = col(|r| r.r2);
            let ind = col(|r| r.nmi_ind);
            let sep = col(|r| r.nmi_sep);
            let suf = col(|r| r.nmi_suf);
            let secs: f64 = at.iter().filter_map(|r| r.train_seconds).sum();
            let mean_of = |v: &[f64]| if v.is_empty() { None } else { Some(stats::mean(v)) };
            let sd_of = |v: &[f64]| if v.len() < 2 { None } else { Some(stats::stdev(v)) };
            SweepSummaryRow {
                lambda_f,
                n_ok: ok.len(),
                n_failed: at.len() - ok.len(),
                r2_mean: mean_of(&r2),
                r2_sd: sd_of(&r2),
                nmi_ind_mean: mean_of(&ind),
                nmi_ind_sd: sd_of(&ind),
                nmi_sep_mean: mean_of(&sep),
                nmi_suf_mean: mean_of(&suf),
                train_seconds_total: secs,
            }
        })
        .collect()
}
