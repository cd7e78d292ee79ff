//! The closed-form classifier against independent linear-algebra oracles:
//! a QR solve of the stacked ridge system, the analytic Bayes posterior,
//! and the nested logistic classifier as a reference model.

mod common;

use common::Mixture1d;
use fairreg::data::{sample_scenario, Scenario};
use fairreg::infometrics::Criterion;
use fairreg::lspc::{
    fit_predict_logistic, logistic_fit, lspc_fit, BasisKind, BasisSpec, LogisticModel, LspcModel,
    PROB_FLOOR,
};
use fairreg::stats;
use fairreg::training::{fairness_penalty, Regulariser};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

/// Ridge least squares onto one-hot targets solved by QR on the augmented
/// system `[Phi; sqrt(lambda N) I] w_c = [t_c; 0]` — a different
/// factorisation (QR, N x D) from the production path (Cholesky on the
/// D x D Gram matrix).
fn qr_ridge_oracle(phi: &DMatrix<f64>, a: &[usize], k: usize, lambda_c: f64) -> DMatrix<f64> {
    let (n, d) = (phi.nrows(), phi.ncols());
    let ridge = (lambda_c * n as f64).sqrt();
    let mut aug = DMatrix::zeros(n + d, d);
    aug.view_mut((0, 0), (n, d)).copy_from(phi);
    for c in 0..d {
        aug[(n + c, c)] = ridge;
    }
    let qr = aug.qr();
    let mut w = DMatrix::zeros(k, d);
    for cls in 0..k {
        let mut rhs = DVector::zeros(n + d);
        for (i, &ai) in a.iter().enumerate() {
            rhs[i] = f64::from(u8::from(ai == cls));
        }
        let sol = qr.q().tr_mul(&rhs);
        let sol = qr
            .r()
            .solve_upper_triangular(&sol.rows(0, d).into_owned())
            .expect("oracle system should be regular");
        w.row_mut(cls).copy_from(&sol.transpose());
    }
    w
}

#[test]
fn fit_matches_independent_qr_oracle() {
    let mut rng = StdRng::seed_from_u64(21);
    for instance in 0..20 {
        let n = rng.random_range(30..120);
        let d = rng.random_range(2..7);
        let k = rng.random_range(2..5);
        let lambda_c = [1e-3, 0.1, 1.0][instance % 3];
        let phi = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let got = lspc_fit(&phi, &a, k, lambda_c).unwrap();
        let want = qr_ridge_oracle(&phi, &a, k, lambda_c);
        let rel = (&got - &want).norm() / want.norm();
        assert!(
            rel < 1e-8,
            "instance {instance} (n={n} d={d} k={k} lambda={lambda_c}): relative error {rel}"
        );
    }
}

#[test]
fn posterior_rows_are_stochastic_and_floored() {
    let mut rng = StdRng::seed_from_u64(5);
    for k in [2usize, 3, 5] {
        let basis = BasisSpec::feature_cross(2);
        // Extreme weights force saturation and flooring on some rows.
        let weights = DMatrix::from_fn(k, basis.output_dim(), |_, _| {
            5.0 * rng.sample::<f64, _>(StandardNormal)
        });
        let model = LspcModel { weights, basis, beta: 10.0, lambda_c: 1e-3 };
        let z = DMatrix::from_fn(200, 2, |r, c| if c == 0 { 1.0 } else { (r as f64 - 100.0) / 25.0 });
        let probs = model.posteriors(&z).unwrap();
        let min_allowed = PROB_FLOOR / (1.0 + k as f64 * PROB_FLOOR) - 1e-15;
        for r in 0..probs.nrows() {
            let sum: f64 = (0..k).map(|c| probs[(r, c)]).sum();
            assert!((sum - 1.0).abs() < 1e-12, "k={k} row {r} sums to {sum}");
            for c in 0..k {
                assert!(probs[(r, c)] >= min_allowed, "k={k} entry ({r},{c}) = {}", probs[(r, c)]);
            }
        }
    }
}

fn gaussian_pair(half_sep: f64) -> Scenario {
    Scenario {
        p: 0.5,
        mean0: [0.0, -half_sep],
        mean1: [0.0, half_sep],
        cov0: [[1.0, 0.0], [0.0, 1.0]],
        cov1: [[1.0, 0.0], [0.0, 1.0]],
    }
}

fn posterior_mae(probs: &DMatrix<f64>, s: &DVector<f64>, mixture: &Mixture1d) -> f64 {
    (0..s.len())
        .map(|i| (probs[(i, 1)] - mixture.posterior(1, s[i])).abs())
        .sum::<f64>()
        / s.len() as f64
}

/// The quadratic closed-form posterior converges to Bayes where the classes
/// genuinely overlap; the logistic posterior — whose sigmoid-of-quadratic
/// family contains the exact Bayes posterior of two Gaussians — stays
/// accurate even on well-separated classes.
#[test]
fn quad_posteriors_approach_bayes() {
    // Overlapping regime (one pooled standard deviation between the means).
    let sc = gaussian_pair(0.5);
    let (_, s, a) = sample_scenario(&sc, 10_000, 31).unwrap();
    let mixture = Mixture1d::score_marginal_of(&sc);
    let z = DMatrix::from_fn(s.len(), 2, |r, c| if c == 0 { 1.0 } else { s[r] });
    let lspc = LspcModel::fit(&z, &a, 2, BasisSpec::feature_cross(2), 1e4, 1e-3).unwrap();
    let mae_lspc = posterior_mae(&lspc.posteriors(&z).unwrap(), &s, &mixture);
    assert!(mae_lspc < 0.05, "closed-form posterior MAE vs Bayes = {mae_lspc}");

    // Well-separated regime (two pooled standard deviations).
    let sc = gaussian_pair(1.0);
    let (_, s, a) = sample_scenario(&sc, 10_000, 32).unwrap();
    let mixture = Mixture1d::score_marginal_of(&sc);
    let z = DMatrix::from_fn(s.len(), 2, |r, c| if c == 0 { 1.0 } else { s[r] });
    let probs = fit_predict_logistic(&z, &a, 2, 1e-3, BasisSpec::feature_cross(2)).unwrap();
    let mae_logistic = posterior_mae(&probs, &s, &mixture);
    assert!(mae_logistic < 0.02, "logistic posterior MAE vs Bayes = {mae_logistic}");
}

/// A duplicated feature splits its weight between the two copies; summing
/// the copies into a single column reproduces the same linear predictor, so
/// the predictions must agree.
#[test]
fn duplicated_feature_splits_weight_symmetrically() {
    let mut rng = StdRng::seed_from_u64(9);
    let n = 400;
    let s: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let a: Vec<usize> = s
        .iter()
        .map(|&v| usize::from(v + 0.3 * rng.sample::<f64, _>(StandardNormal) > 0.0))
        .collect();
    let dup = DMatrix::from_fn(n, 3, |r, c| if c == 0 { 1.0 } else { s[r] });
    let model = logistic_fit(&dup, &a, 2, 1e-3).unwrap();
    let (w1, w2) = (model.weights[(0, 1)], model.weights[(0, 2)]);
    assert!((w1 - w2).abs() < 1e-6, "duplicate columns got weights {w1} vs {w2}");

    let merged = LogisticModel {
        weights: DMatrix::from_row_slice(1, 2, &[model.weights[(0, 0)], w1 + w2]),
        k: 2,
    };
    let single = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { s[r] });
    let p_dup = model.probabilities(&dup);
    let p_single = merged.probabilities(&single);
    for i in 0..n {
        assert!((p_dup[(i, 1)] - p_single[(i, 1)]).abs() < 1e-6);
    }
}

#[test]
fn huge_ridge_collapses_to_zero_and_priors() {
    let mut rng = StdRng::seed_from_u64(13);
    let n = 300;
    let z = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { rng.sample::<f64, _>(StandardNormal) + f64::from(r % 3 == 0) });
    let a: Vec<usize> = (0..n).map(|r| usize::from(r % 3 == 0)).collect();

    let phi = BasisSpec::feature_cross(2).expand(&z);
    let w = lspc_fit(&phi, &a, 2, 1e9).unwrap();
    assert!(w.norm() < 1e-6, "1e9 ridge left weight norm {}", w.norm());

    // The logistic intercept is unpenalised, so the fit collapses to the
    // class priors rather than to uniform.
    let probs = fit_predict_logistic(&z, &a, 2, 1e9, BasisSpec::feature_cross(2)).unwrap();
    let prior1 = a.iter().filter(|&&c| c == 1).count() as f64 / n as f64;
    for i in 0..n {
        assert!((probs[(i, 1)] - prior1).abs() < 1e-3, "row {i}: {} vs prior {prior1}", probs[(i, 1)]);
    }
}

/// The closed-form and nested-logistic regularisers must order random
/// batches the same way: frontier trade-offs built from either penalty then
/// agree on which scores are more dependent on the sensitive class.
#[test]
fn penalty_values_rank_together_across_batches() {
    let mut rng = StdRng::seed_from_u64(77);
    let n = 300;
    let mut lspc_vals = Vec::new();
    let mut logistic_vals = Vec::new();
    for batch in 0..30 {
        // Coupling ramps from none to strong across batches.
        let coupling = batch as f64 / 29.0 * 2.0;
        let a: Vec<usize> = (0..n).map(|_| usize::from(rng.random::<f64>() < 0.5)).collect();
        let s = DVector::from_fn(n, |i, _| {
            coupling * (a[i] as f64 - 0.5) + rng.sample::<f64, _>(StandardNormal)
        });
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let reg_lspc = Regulariser::lspc(Criterion::Independence, BasisKind::FeatureCross);
        let reg_logistic = Regulariser::logistic(Criterion::Independence);
        lspc_vals.push(fairness_penalty(&reg_lspc, &y, &s, &a).unwrap());
        logistic_vals.push(fairness_penalty(&reg_logistic, &y, &s, &a).unwrap());
    }
    let rho = stats::spearman(&lspc_vals, &logistic_vals);
    assert!(rho > 0.95, "penalty rank correlation = {rho}");
}
