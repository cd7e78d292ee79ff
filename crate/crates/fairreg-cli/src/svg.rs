//! Minimal built-in SVG charts. The CSVs are the contract; these renderings
//! are a convenience for eyeballing a run without external tooling.

use crate::bench::BenchMedianRow;
use crate::error::{CliError, Result};
use crate::sweep::SweepSummaryRow;
use crate::synth_eval::SynthEvalRow;
use std::collections::BTreeMap;
use std::path::Path;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    line: bool,
}

struct Chart {
    title: String,
    xlabel: String,
    ylabel: String,
    series: Vec<Series>,
    log_x: bool,
    log_y: bool,
    diagonal: bool,
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:.1e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl Chart {
    fn render(&self) -> String {
        let tx = |v: f64| if self.log_x { v.ln() } else { v };
        let ty = |v: f64| if self.log_y { v.ln() } else { v };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                if x.is_finite() && y.is_finite() && (!self.log_x || x > 0.0) && (!self.log_y || y > 0.0) {
                    xs.push(tx(x));
                    ys.push(ty(y));
                }
            }
        }
        let (x0, x1) = padded_range(&xs);
        let (y0, y1) = padded_range(&ys);
        let px = |x: f64| MARGIN_L + (tx(x) - x0) / (x1 - x0) * (WIDTH - MARGIN_L - MARGIN_R);
        let py = |y: f64| HEIGHT - MARGIN_B - (ty(y) - y0) / (y1 - y0) * (HEIGHT - MARGIN_T - MARGIN_B);

        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">\n"
        ));
        out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        out.push_str(&format!(
            "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            xml_escape(&self.title)
        ));

        // Axes with 5 ticks each; tick labels are in data units.
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let gx = x0 + f * (x1 - x0);
            let gy = y0 + f * (y1 - y0);
            let sx = MARGIN_L + f * (WIDTH - MARGIN_L - MARGIN_R);
            let sy = HEIGHT - MARGIN_B - f * (HEIGHT - MARGIN_T - MARGIN_B);
            let x_data = if self.log_x { gx.exp() } else { gx };
            let y_data = if self.log_y { gy.exp() } else { gy };
            out.push_str(&format!(
                "<line x1=\"{sx:.1}\" y1=\"{}\" x2=\"{sx:.1}\" y2=\"{}\" stroke=\"#ddd\"/>\n",
                MARGIN_T,
                HEIGHT - MARGIN_B
            ));
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{sy:.1}\" x2=\"{}\" y2=\"{sy:.1}\" stroke=\"#ddd\"/>\n",
                MARGIN_L,
                WIDTH - MARGIN_R
            ));
            out.push_str(&format!(
                "<text x=\"{sx:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                HEIGHT - MARGIN_B + 16.0,
                tick_label(x_data)
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
                MARGIN_L - 6.0,
                sy + 4.0,
                tick_label(y_data)
            ));
        }
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            MARGIN_L,
            HEIGHT - MARGIN_B,
            WIDTH - MARGIN_R,
            HEIGHT - MARGIN_B
        ));
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            MARGIN_L,
            MARGIN_T,
            MARGIN_L,
            HEIGHT - MARGIN_B
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            HEIGHT - 10.0,
            xml_escape(&self.xlabel)
        ));
        out.push_str(&format!(
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            xml_escape(&self.ylabel)
        ));

        if self.diagonal {
            let lo = x0.max(y0);
            let hi = x1.min(y1);
            if hi > lo {
                let d0 = if self.log_x { lo.exp() } else { lo };
                let d1 = if self.log_x { hi.exp() } else { hi };
                out.push_str(&format!(
                    "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n",
                    px(d0),
                    py(d0),
                    px(d1),
                    py(d1)
                ));
            }
        }

        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .copied()
                .filter(|&(x, y)| {
                    x.is_finite() && y.is_finite() && (!self.log_x || x > 0.0) && (!self.log_y || y > 0.0)
                })
                .collect();
            if s.line && pts.len() > 1 {
                let path: Vec<String> =
                    pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
                out.push_str(&format!(
                    "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                    path.join(" ")
                ));
            }
            for &(x, y) in &pts {
                out.push_str(&format!(
                    "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>\n",
                    px(x),
                    py(y)
                ));
            }
            let ly = MARGIN_T + 14.0 * k as f64;
            out.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{ly:.1}\" r=\"3\" fill=\"{color}\"/>\n",
                WIDTH - MARGIN_R + 12.0
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{:.1}\">{}</text>\n",
                WIDTH - MARGIN_R + 20.0,
                ly + 4.0,
                xml_escape(&s.label)
            ));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn padded_range(vs: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = vs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write(path: &Path, chart: &Chart) -> Result<()> {
    std::fs::write(path, chart.render()).map_err(|e| CliError::io(path, e))
}

/// Accuracy–fairness frontier: held-out R² against held-out nmi, one point
/// per λ_f (means across folds).
pub fn write_frontier_svg(path: &Path, summary: &[SweepSummaryRow]) -> Result<()> {
    let pick = |get: fn(&SweepSummaryRow) -> Option<f64>| -> Vec<(f64, f64)> {
        summary
            .iter()
            .filter_map(|r| match (get(r), r.r2_mean) {
                (Some(x), Some(y)) => Some((x, y)),
                _ => None,
            })
            .collect()
    };
    let chart = Chart {
        title: "Accuracy–fairness frontier (fold means per λ_f)".into(),
        xlabel: "held-out nmi".into(),
        ylabel: "held-out R²".into(),
        series: vec![
            Series { label: "independence".into(), points: pick(|r| r.nmi_ind_mean), line: true },
            Series { label: "separation".into(), points: pick(|r| r.nmi_sep_mean), line: true },
            Series { label: "sufficiency".into(), points: pick(|r| r.nmi_suf_mean), line: true },
        ],
        log_x: false,
        log_y: false,
        diagonal: false,
    };
    write(path, &chart)
}

/// Estimates against the oracle, one point per scenario, diagonal = perfect.
pub fn write_synth_eval_svg(path: &Path, rows: &[SynthEvalRow]) -> Result<()> {
    let mut oracle: BTreeMap<usize, f64> = BTreeMap::new();
    for r in rows {
        if r.estimator == "oracle" && r.status == "ok" {
            if let Some(nmi) = r.nmi {
                oracle.insert(r.scenario, nmi);
            }
        }
    }
    let mut by_estimator: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        if r.estimator == "oracle" || r.status != "ok" {
            continue;
        }
        if let (Some(o), Some(nmi)) = (oracle.get(&r.scenario), r.nmi) {
            by_estimator.entry(r.estimator.clone()).or_default().push((*o, nmi));
        }
    }
    let chart = Chart {
        title: "Estimator nmi against the Monte-Carlo oracle".into(),
        xlabel: "oracle nmi".into(),
        ylabel: "estimated nmi".into(),
        series: by_estimator
            .into_iter()
            .map(|(label, points)| Series { label, points, line: false })
            .collect(),
        log_x: false,
        log_y: false,
        diagonal: true,
    };
    write(path, &chart)
}

/// Median fit time against N on log-log axes, one line per (method, λ_f).
pub fn write_bench_svg(path: &Path, medians: &[BenchMedianRow]) -> Result<()> {
    let mut by_method: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in medians {
        if let Some(m) = r.median_seconds {
            let label = format!("{} (λ_f={})", r.method, r.lambda_f);
            by_method.entry(label).or_default().push((r.n as f64, m));
        }
    }
    let chart = Chart {
        title: "Median fit time vs N (log-log)".into(),
        xlabel: "N".into(),
        ylabel: "seconds".into(),
        series: by_method
            .into_iter()
            .map(|(label, points)| Series { label, points, line: true })
            .collect(),
        log_x: true,
        log_y: true,
        diagonal: false,
    };
    write(path, &chart)
}
