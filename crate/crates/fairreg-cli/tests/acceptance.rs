//! Acceptance suite: ten end-to-end checks covering solver equivalences,
//! gradient exactness, estimator fidelity against the Monte-Carlo oracle,
//! frontier behaviour, runtime scaling and the oracle's own self-check.
//!
//! The criteria run sequentially inside one test so the timing-sensitive
//! checks never compete with each other for cores; each criterion prints a
//! single PASS/FAIL line (visible with `--nocapture` or on failure) and the
//! test fails if any criterion does.

mod common;

use common::{max_abs_diff, ridge_oracle_lu, Mixture1d};
use fairreg::data::{kfold, sample_scenario, scenario_regression_dataset, Dataset, Scenario};
use fairreg::infometrics::{
    estimate_nmi, monte_carlo_mi, Criterion, EstimatorBackend, MiTarget,
};
use fairreg::lspc::{lspc_fit, BasisKind, BasisSpec, LspcModel};
use fairreg::stats;
use fairreg::training::{
    fairness_penalty, loss_gradient, predict, r_squared, total_loss, train, InitStrategy,
    Regulariser, TrainingConfig,
};
use fairreg_cli::config::{DatasetSource, LambdaW};
use fairreg_cli::{run_bench, run_sweep, run_synth_eval, BenchConfig, SweepConfig, SynthEvalConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::time::Instant;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($arg)+)),
        }
    };
}

type Check = fn() -> Result<String, String>;

#[test]
fn acceptance_suite() {
    let criteria: [(&str, Check); 10] = [
        ("01 ridge-oracle equivalence", c01_ridge_oracle_equivalence),
        ("02 closed-form classifier equivalence", c02_lspc_solver_equivalence),
        ("03 gradient suite", c03_gradient_suite),
        ("04 estimator fidelity", c04_estimator_fidelity),
        ("05 independence anchors", c05_independence_anchors),
        ("06 sufficiency identity", c06_sufficiency_identity),
        ("07 frontier property", c07_frontier_property),
        ("08 runtime scaling", c08_runtime_scaling),
        ("09 penalty parity", c09_penalty_parity),
        ("10 oracle self-check", c10_oracle_self_check),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check);
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(Ok(detail)) => println!("ACCEPTANCE {name}: PASS ({secs:.1}s) — {detail}"),
            Ok(Err(detail)) => {
                println!("ACCEPTANCE {name}: FAIL ({secs:.1}s) — {detail}");
                failures += 1;
            }
            Err(_) => {
                println!("ACCEPTANCE {name}: FAIL ({secs:.1}s) — panicked");
                failures += 1;
            }
        }
    }
    assert_eq!(failures, 0, "{failures} acceptance criteria failed");
}

// -------------------------------------------------------------------------
// Shared fixtures.

/// Regression data with a group-dependent target shift and a feature the
/// group can be read from: the setting every frontier criterion uses.
fn biased_scenario() -> Scenario {
    Scenario {
        p: 0.5,
        mean0: [0.0, 0.0],
        mean1: [1.2, 1.8],
        cov0: [[1.0, 0.3], [0.3, 1.0]],
        cov1: [[1.0, 0.3], [0.3, 1.0]],
    }
}

fn random_instance(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    let a: Vec<usize> = (0..n).map(|_| usize::from(rng.random::<f64>() < 0.5)).collect();
    let y = DVector::from_fn(n, |i, _| {
        let mut v = 0.6 * (a[i] as f64 - 0.5);
        for c in 0..p {
            v += ((c % 3) as f64 - 1.0) * x[(i, c)];
        }
        v + 0.3 * rng.random::<f64>()
    });
    let names = (0..p).map(|c| format!("x{c}")).collect();
    Dataset::new(x, y, a, names).expect("valid instance")
}

// -------------------------------------------------------------------------
// 1. Training with the fairness term off must reproduce closed-form ridge.

fn c01_ridge_oracle_equivalence() -> Result<String, String> {
    let mut worst_gap = 0.0f64;
    let mut worst_secs = 0.0f64;
    for seed in 0..10u64 {
        let ds = random_instance(500, 10, 100 + seed);
        let mut config = TrainingConfig::ridge(0.05);
        config.init = InitStrategy::Zeros;
        let t0 = Instant::now();
        let model = train(&ds, &config).map_err(|e| e.to_string())?;
        let secs = t0.elapsed().as_secs_f64();
        let oracle = ridge_oracle_lu(&ds.features, &ds.target, 0.05);
        let gap = max_abs_diff(&model.theta, &oracle);
        worst_gap = worst_gap.max(gap);
        worst_secs = worst_secs.max(secs);
        ensure!(gap < 1e-5, "instance {seed}: ||theta - ridge||_inf = {gap:.3e} >= 1e-5");
        ensure!(secs < 1.0, "instance {seed}: took {secs:.2}s >= 1s");
    }
    Ok(format!("10 instances, worst gap {worst_gap:.2e}, worst time {worst_secs:.2}s"))
}

// -------------------------------------------------------------------------
// 2. The closed-form classifier fit must equal an independent
//    normal-equations solve, and its posterior rows must be stochastic.

fn c02_lspc_solver_equivalence() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let lambdas = [1e-3, 1e-1, 1.0];
    let mut worst_rel = 0.0f64;
    for instance in 0..20 {
        let n = 30 + (instance * 7) % 90;
        let d = 2 + instance % 5;
        let k = 2 + instance % 3;
        let lambda_c = lambdas[instance % lambdas.len()];
        let phi = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
        let a: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();

        let got = lspc_fit(&phi, &a, k, lambda_c).map_err(|e| e.to_string())?;

        // Independent solve of the same normal equations with full-pivot LU.
        let mut lhs = phi.transpose() * &phi;
        for j in 0..d {
            lhs[(j, j)] += lambda_c * n as f64;
        }
        let lu = lhs.full_piv_lu();
        let mut want = DMatrix::zeros(k, d);
        for class in 0..k {
            let indicator = DVector::from_fn(n, |i, _| f64::from(a[i] == class));
            let rhs = phi.transpose() * indicator;
            let w = lu.solve(&rhs).ok_or("oracle normal equations singular")?;
            want.row_mut(class).copy_from(&w.transpose());
        }
        let rel = (&got - &want).norm() / want.norm().max(1e-300);
        worst_rel = worst_rel.max(rel);
        ensure!(rel < 1e-8, "instance {instance}: relative Frobenius error {rel:.3e} >= 1e-8");

        let model = LspcModel { weights: got, basis: BasisSpec::new(BasisKind::Identity, d), beta: 10.0, lambda_c };
        let probs = model.posteriors(&phi).map_err(|e| e.to_string())?;
        for r in 0..n {
            let sum: f64 = (0..k).map(|c| probs[(r, c)]).sum();
            ensure!(
                (sum - 1.0).abs() <= 1e-12,
                "instance {instance}: posterior row {r} sums to {sum}"
            );
        }
    }
    Ok(format!("20 instances, worst relative Frobenius error {worst_rel:.2e}, rows stochastic"))
}

// -------------------------------------------------------------------------
// 3. Analytic gradients must match central finite differences for every
//    criterion, basis and penalty family.

fn c03_gradient_suite() -> Result<String, String> {
    let regularisers: Vec<Regulariser> = {
        let mut list = Vec::new();
        for criterion in [Criterion::Independence, Criterion::Separation, Criterion::Sufficiency] {
            for basis in [BasisKind::Identity, BasisKind::FeatureCross] {
                list.push(Regulariser::lspc(criterion, basis));
            }
        }
        list.push(Regulariser::BerkGroup { bandwidth: None });
        list.push(Regulariser::BerkIndividual { bandwidth: None });
        list
    };
    let ds = scenario_regression_dataset(&biased_scenario(), 200, 2, 17).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let theta =
        DVector::from_fn(ds.p() + 1, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    let mut worst = 0.0f64;
    for reg in &regularisers {
        let config = TrainingConfig::new(0.03, 0.7, reg.clone());
        let grad = loss_gradient(&theta, &ds, &config).map_err(|e| e.to_string())?;
        let h = 1e-5;
        let mut fd = DVector::zeros(theta.len());
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            tp[i] += h;
            let fp = total_loss(&tp, &ds, &config).map_err(|e| e.to_string())?;
            tp[i] = theta[i] - h;
            let fm = total_loss(&tp, &ds, &config).map_err(|e| e.to_string())?;
            fd[i] = (fp - fm) / (2.0 * h);
        }
        let rel = (&grad - &fd).amax() / grad.amax().max(1e-12);
        worst = worst.max(rel);
        ensure!(
            rel < 1e-5,
            "{}: relative gradient error {rel:.3e} >= 1e-5",
            reg.label()
        );
    }
    Ok(format!("{} penalties, worst relative gradient error {worst:.2e}", regularisers.len()))
}

// -------------------------------------------------------------------------
// 4. Across a 100-scenario grid at N = 10^4, the quadratic-basis estimates
//    must track the Monte-Carlo oracle.

fn c04_estimator_fidelity() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = SynthEvalConfig {
        scenarios: 100,
        grid_seed: 1,
        samples: 10_000,
        sample_seed: 21,
        oracle_samples: 200_000,
        estimators: vec!["lspc-quad".into(), "logistic-quad".into()],
        out_dir: Some(dir.path().display().to_string()),
    };
    let t0 = Instant::now();
    let outcome = run_synth_eval(&config, 0, false, None).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    ensure!(outcome.n_failed == 0, "{} rows failed", outcome.n_failed);
    ensure!(secs < 600.0, "study took {secs:.0}s >= 600s");
    let mut detail = String::new();
    for summary in &outcome.summary {
        let rho = summary.spearman.ok_or("missing spearman")?;
        let mae = summary.mae.ok_or("missing mae")?;
        ensure!(rho >= 0.9, "{}: spearman {rho:.4} < 0.9", summary.estimator);
        ensure!(mae <= 0.07, "{}: mae {mae:.4} > 0.07", summary.estimator);
        detail.push_str(&format!("{} rho {rho:.3} mae {mae:.3}; ", summary.estimator));
    }
    Ok(format!("{detail}runtime {secs:.0}s"))
}

// -------------------------------------------------------------------------
// 5. Anchors: an independent scenario must read near zero, a score equal to
//    the class near one.

fn c05_independence_anchors() -> Result<String, String> {
    let (y, s, a) = sample_scenario(&Scenario::independent(), 10_000, 77).map_err(|e| e.to_string())?;
    let zero = estimate_nmi(Criterion::Independence, &y, &s, &a, &EstimatorBackend::lspc_quad())
        .map_err(|e| e.to_string())?;
    ensure!(zero.nmi.abs() < 0.02, "independent scenario read nmi = {:.4}", zero.nmi);

    let s_eq_a = DVector::from_fn(a.len(), |i, _| a[i] as f64);
    let one = estimate_nmi(Criterion::Independence, &y, &s_eq_a, &a, &EstimatorBackend::lspc_quad())
        .map_err(|e| e.to_string())?;
    ensure!(one.nmi > 0.9, "score equal to class read nmi = {:.4}", one.nmi);
    Ok(format!("independent: {:.4}, identical: {:.4}", zero.nmi, one.nmi))
}

// -------------------------------------------------------------------------
// 6. The sufficiency penalty must equal separation minus independence on
//    every evaluated batch.

fn c06_sufficiency_identity() -> Result<String, String> {
    let mut worst = 0.0f64;
    let mut batches = 0;
    for seed in 0..10u64 {
        let (y, s, a) = sample_scenario(&biased_scenario(), 400, 300 + seed).map_err(|e| e.to_string())?;
        for basis in [BasisKind::Identity, BasisKind::FeatureCross] {
            let value = |criterion: Criterion| -> Result<f64, String> {
                fairness_penalty(&Regulariser::lspc(criterion, basis), &y, &s, &a)
                    .map_err(|e| e.to_string())
            };
            let ind = value(Criterion::Independence)?;
            let sep = value(Criterion::Separation)?;
            let suf = value(Criterion::Sufficiency)?;
            let gap = (suf - (sep - ind)).abs();
            worst = worst.max(gap);
            batches += 1;
            ensure!(gap <= 1e-12, "batch {seed}/{basis:?}: |suf - (sep - ind)| = {gap:.3e} > 1e-12");
        }
    }
    Ok(format!("{batches} batches, worst identity gap {worst:.2e}"))
}

// -------------------------------------------------------------------------
// 7. Sweeping λ_f must trade accuracy for fairness monotonically and reach
//    near-independence (and near-separation) at the strongest weight.

fn c07_frontier_property() -> Result<String, String> {
    let t0 = Instant::now();
    let base = SweepConfig {
        dataset: DatasetSource::Synthetic {
            scenario: biased_scenario(),
            n: 1_500,
            n_noise: 3,
            seed: 31,
        },
        sweep: vec![0.0, 0.1, 1.0, 10.0, 100.0],
        folds: 5,
        fold_seed: 7,
        lambda_w: LambdaW::Fixed { value: 1e-2 },
        regulariser: Regulariser::lspc(Criterion::Independence, BasisKind::FeatureCross),
        eval_backend: EstimatorBackend::lr_rks(5),
        optimiser: None,
        init_seed: 0,
        n_starts: 1,
        out_dir: None,
    };
    let mut detail = String::new();
    for criterion in [Criterion::Independence, Criterion::Separation] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut config = base.clone();
        config.regulariser = Regulariser::lspc(criterion, BasisKind::FeatureCross);
        config.out_dir = Some(dir.path().display().to_string());
        let outcome = run_sweep(&config, 0, false, None).map_err(|e| e.to_string())?;
        ensure!(outcome.n_failed == 0, "{criterion:?}: {} folds failed", outcome.n_failed);
        let nmi: Vec<f64> = outcome
            .summary
            .iter()
            .map(|row| match criterion {
                Criterion::Independence => row.nmi_ind_mean.unwrap_or(f64::NAN),
                _ => row.nmi_sep_mean.unwrap_or(f64::NAN),
            })
            .collect();
        let r2: Vec<f64> = outcome.summary.iter().map(|r| r.r2_mean.unwrap_or(f64::NAN)).collect();
        for w in nmi.windows(2) {
            ensure!(
                w[1] <= w[0] + 0.02,
                "{criterion:?}: nmi not monotone within 0.02: {nmi:?}"
            );
        }
        ensure!(
            nmi.last().unwrap() < &0.05,
            "{criterion:?}: nmi at the largest lambda_f = {:.4} >= 0.05",
            nmi.last().unwrap()
        );
        // 0.005 absorbs cross-validation noise on the fold means; real R²
        // moves along this sweep are an order of magnitude larger.
        for w in r2.windows(2) {
            ensure!(w[1] <= w[0] + 0.005, "{criterion:?}: R² not non-increasing: {r2:?}");
        }
        detail.push_str(&format!(
            "{criterion:?}: nmi {:.3}->{:.4}, r2 {:.3}->{:.3}; ",
            nmi[0],
            nmi.last().unwrap(),
            r2[0],
            r2.last().unwrap()
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure!(secs < 300.0, "frontier sweeps took {secs:.0}s >= 300s");
    Ok(format!("{detail}runtime {secs:.0}s"))
}

// -------------------------------------------------------------------------
// 8. Fit time must scale linearly with N for the closed-form penalties and
//    quadratically for the pairwise baselines.

fn c08_runtime_scaling() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = BenchConfig {
        sizes: vec![500, 1000, 2000, 4000, 8000, 16000],
        methods: vec!["lspc-ind-identity".into(), "lspc-ind-cross".into(), "berk-individual".into()],
        lambda_f: vec![1.0],
        lambda_w: 1e-2,
        fixed_iters: 12,
        repeats: 3,
        timeout_seconds: 600.0,
        scenario_seed: 3,
        n_noise: 3,
        out_dir: Some(dir.path().display().to_string()),
    };
    let outcome = run_bench(&config, false, None).map_err(|e| e.to_string())?;
    ensure!(outcome.n_failed == 0, "{} bench rows failed", outcome.n_failed);
    let slope_of = |method: &str| -> Result<f64, String> {
        outcome
            .summary
            .iter()
            .find(|row| row.method == method)
            .and_then(|row| row.slope)
            .ok_or_else(|| format!("no slope for {method}"))
    };
    let slope_lin = slope_of("lspc-ind-identity")?;
    let slope_cross = slope_of("lspc-ind-cross")?;
    let slope_berk = slope_of("berk-individual")?;
    ensure!((slope_lin - 1.0).abs() <= 0.3, "lspc-ind-identity slope {slope_lin:.3} outside 1.0±0.3");
    ensure!((slope_cross - 1.0).abs() <= 0.3, "lspc-ind-cross slope {slope_cross:.3} outside 1.0±0.3");
    ensure!((slope_berk - 2.0).abs() <= 0.3, "berk-individual slope {slope_berk:.3} outside 2.0±0.3");
    for n in [4000usize, 8000, 16000] {
        let median = |method: &str| -> Result<f64, String> {
            outcome
                .medians
                .iter()
                .find(|row| row.method == method && row.n == n)
                .and_then(|row| row.median_seconds)
                .ok_or_else(|| format!("no median for {method} at N={n}"))
        };
        let berk = median("berk-individual")?;
        for lspc in ["lspc-ind-identity", "lspc-ind-cross"] {
            let t = median(lspc)?;
            ensure!(t < berk, "{lspc} ({t:.4}s) not faster than berk-individual ({berk:.4}s) at N={n}");
        }
    }
    Ok(format!(
        "slopes: lspc identity {slope_lin:.2}, lspc cross {slope_cross:.2}, berk {slope_berk:.2}; lspc faster at N>=4000"
    ))
}

// -------------------------------------------------------------------------
// 9. The closed-form and nested-logistic penalties must trace the same
//    frontier, with the nested fit paying at least 3x the training time.

fn c09_penalty_parity() -> Result<String, String> {
    let ds = scenario_regression_dataset(&biased_scenario(), 6_250, 3, 79).map_err(|e| e.to_string())?;
    let folds = kfold(ds.n(), 5, 13).map_err(|e| e.to_string())?;
    let (train_idx, test_idx) = folds.split(0);
    let train_ds = ds.subset(&train_idx); // 5000 rows
    let test_ds = ds.subset(&test_idx);
    let eval = EstimatorBackend::lr_rks(9);

    let lambda_grid = [0.0, 0.1, 0.3, 1.0, 3.0];
    let mut results: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new(); // (r2, nmi, seconds)
    for nested in [false, true] {
        let mut r2s = Vec::new();
        let mut nmis = Vec::new();
        let mut seconds = 0.0;
        for &lambda_f in &lambda_grid {
            let reg = if nested {
                Regulariser::logistic(Criterion::Independence)
            } else {
                Regulariser::lspc(Criterion::Independence, BasisKind::FeatureCross)
            };
            let config = TrainingConfig::new(1e-2, lambda_f, reg);
            let t0 = Instant::now();
            let model = train(&train_ds, &config).map_err(|e| e.to_string())?;
            seconds += t0.elapsed().as_secs_f64();
            let scores = predict(&model, &test_ds.features).map_err(|e| e.to_string())?;
            r2s.push(r_squared(&test_ds.target, &scores));
            let est = estimate_nmi(Criterion::Independence, &test_ds.target, &scores, &test_ds.sensitive, &eval)
                .map_err(|e| e.to_string())?;
            nmis.push(est.nmi);
        }
        results.push((r2s, nmis, seconds));
    }
    let (lspc_r2, lspc_nmi, lspc_secs) = &results[0];
    let (logi_r2, logi_nmi, logi_secs) = &results[1];
    let rho_r2 = stats::spearman(lspc_r2, logi_r2);
    let rho_nmi = stats::spearman(lspc_nmi, logi_nmi);
    ensure!(rho_r2 > 0.95, "R² rank correlation {rho_r2:.3} <= 0.95 ({lspc_r2:?} vs {logi_r2:?})");
    ensure!(rho_nmi > 0.95, "nmi rank correlation {rho_nmi:.3} <= 0.95 ({lspc_nmi:?} vs {logi_nmi:?})");
    ensure!(
        *logi_secs >= 3.0 * lspc_secs,
        "nested logistic took {logi_secs:.2}s, less than 3x the closed form's {lspc_secs:.2}s"
    );
    Ok(format!(
        "rank corr r2 {rho_r2:.3}, nmi {rho_nmi:.3}; training {lspc_secs:.1}s vs {logi_secs:.1}s ({:.1}x)",
        logi_secs / lspc_secs
    ))
}

// -------------------------------------------------------------------------
// 10. The Monte-Carlo oracle must agree with direct quadrature of the same
//     integral on analytic scenarios.

fn c10_oracle_self_check() -> Result<String, String> {
    let cases = [
        Scenario::independent(),
        Scenario {
            p: 0.5,
            mean0: [0.0, -0.5],
            mean1: [0.0, 0.5],
            cov0: [[1.0, 0.0], [0.0, 1.0]],
            cov1: [[1.0, 0.0], [0.0, 1.0]],
        },
        Scenario {
            p: 0.5,
            mean0: [0.0, -1.0],
            mean1: [0.0, 1.0],
            cov0: [[1.0, 0.0], [0.0, 1.0]],
            cov1: [[1.0, 0.0], [0.0, 2.0]],
        },
        Scenario {
            p: 0.3,
            mean0: [0.0, -1.0],
            mean1: [1.0, 1.0],
            cov0: [[1.0, 0.2], [0.2, 1.0]],
            cov1: [[1.0, -0.3], [-0.3, 1.5]],
        },
        Scenario {
            p: 0.5,
            mean0: [0.0, 0.0],
            mean1: [0.0, 3.0],
            cov0: [[1.0, 0.0], [0.0, 1.0]],
            cov1: [[1.0, 0.0], [0.0, 1.0]],
        },
    ];
    let mut worst_sigmas = 0.0f64;
    for (i, sc) in cases.iter().enumerate() {
        let truth = Mixture1d::score_marginal_of(sc).quad_mi();
        let (mi, stderr) =
            monte_carlo_mi(sc, MiTarget::ScoreClass, 400_000, 500 + i as u64).map_err(|e| e.to_string())?;
        // The tiny absolute epsilon covers the independent case, where the
        // log ratios are analytically zero and both the estimate and its
        // standard error are pure rounding noise.
        let gap = (mi - truth).abs();
        ensure!(
            gap <= 3.0 * stderr + 1e-6,
            "scenario {i}: |oracle - quadrature| = {gap:.3e} > 3*stderr = {:.3e}",
            3.0 * stderr
        );
        // Only scenarios with real dependence give a meaningful sigma ratio;
        // on the independent anchor gap/stderr is noise divided by noise.
        if gap > 1e-6 {
            worst_sigmas = worst_sigmas.max(gap / stderr);
        }
    }
    Ok(format!("5 scenarios, worst deviation {worst_sigmas:.2} standard errors"))
}
