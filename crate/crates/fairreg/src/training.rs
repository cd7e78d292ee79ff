//! Training linear regressors under fairness penalties.
//!
//! The objective is
//!
//! ```text
//! L(theta) = (1/N) ||Y - S||^2  +  lambda_w ||theta_w||^2  +  lambda_f * penalty(S)
//! ```
//!
//! with scores `S = X theta_w + theta_0` (intercept unpenalised). The penalty
//! is either an entropic term — the mean log-probability that a nested
//! classifier assigns to the sensitive class given the score (and, for the
//! conditional criteria, the target) — or one of the pairwise baselines.
//! Entropic penalties are mean log-likelihoods and therefore non-positive;
//! adding them with a positive coefficient drives the classifier's
//! log-likelihood down, making the sensitive attribute unpredictable.
//!
//! Gradients are exact. For the closed-form least-squares classifier the
//! derivative flows through the Gram-matrix solve by the adjoint method; for
//! the nested logistic classifier it flows through the inner optimum by
//! implicit differentiation of the stationarity condition. Both match central
//! finite differences to high precision (see the test suites).

use crate::data::{Dataset, FoldAssignment, Standardizer};
use crate::error::{Error, Result};
use crate::infometrics::{estimate_nmi, Criterion, EstimatorBackend};
use crate::lspc::{
    self, gram_cholesky, log_floored_prob_grad_q, softplus, softplus_deriv, BasisKind, BasisSpec,
    PROB_FLOOR,
};
use crate::optim::{self, LbfgsParams};
use crate::stats;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Which pairwise baseline penalty to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BerkKind {
    /// Squared kernel-weighted mean score difference across the two groups;
    /// individual errors may cancel.
    Group,
    /// Kernel-weighted mean of squared cross-group score differences.
    Individual,
}

/// Fairness penalty added to the training objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Regulariser {
    /// Plain ridge regression.
    None,
    /// Mean log-probability of the sensitive class under the closed-form
    /// least-squares classifier, refitted on the current scores at every
    /// objective evaluation.
    LspcEntropic {
        criterion: Criterion,
        basis: BasisKind,
        lambda_c: f64,
        beta: f64,
    },
    /// Same entropic construction with the iteratively fitted logistic
    /// classifier on the quadratic basis nested inside the objective.
    LogisticEntropic { criterion: Criterion, lambda_c: f64 },
    /// Pairwise group baseline; `None` bandwidth means the standard
    /// deviation of the target.
    BerkGroup { bandwidth: Option<f64> },
    /// Pairwise individual baseline.
    BerkIndividual { bandwidth: Option<f64> },
}

impl Regulariser {
    /// Entropic penalty with default classifier settings.
    pub fn lspc(criterion: Criterion, basis: BasisKind) -> Regulariser {
        Regulariser::LspcEntropic {
            criterion,
            basis,
            lambda_c: lspc::DEFAULT_LAMBDA_C,
            beta: lspc::DEFAULT_BETA,
        }
    }

    /// Nested-logistic entropic penalty with the default ridge weight.
    pub fn logistic(criterion: Criterion) -> Regulariser {
        Regulariser::LogisticEntropic { criterion, lambda_c: lspc::DEFAULT_LAMBDA_C }
    }

    /// Short tag used in benchmark and sweep outputs.
    pub fn label(&self) -> String {
        match self {
            Regulariser::None => "none".into(),
            Regulariser::LspcEntropic { criterion, basis, .. } => {
                let b = match basis {
                    BasisKind::Identity => "identity",
                    BasisKind::FeatureCross => "cross",
                };
                format!("lspc-{}-{}", criterion.label(), b)
            }
            Regulariser::LogisticEntropic { criterion, .. } => {
                format!("logistic-{}", criterion.label())
            }
            Regulariser::BerkGroup { .. } => "berk-group".into(),
            Regulariser::BerkIndividual { .. } => "berk-individual".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        let check = |v: f64, what: &str| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::DimensionMismatch(format!("{what} must be finite and >= 0, got {v}")))
            }
        };
        match self {
            Regulariser::None => Ok(()),
            Regulariser::LspcEntropic { lambda_c, beta, .. } => {
                check(*lambda_c, "lambda_c")?;
                if !beta.is_finite() || *beta <= 0.0 {
                    return Err(Error::DimensionMismatch(format!(
                        "beta must be finite and > 0, got {beta}"
                    )));
                }
                Ok(())
            }
            Regulariser::LogisticEntropic { lambda_c, .. } => check(*lambda_c, "lambda_c"),
            Regulariser::BerkGroup { bandwidth } | Regulariser::BerkIndividual { bandwidth } => {
                if let Some(bw) = bandwidth {
                    if !bw.is_finite() || *bw <= 0.0 {
                        return Err(Error::DimensionMismatch(format!(
                            "bandwidth must be finite and > 0, got {bw}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Quasi-Newton loop settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimiserConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub history_size: usize,
}

impl Default for OptimiserConfig {
    fn default() -> Self {
        OptimiserConfig { max_iter: 500, grad_tol: 1e-6, history_size: 10 }
    }
}

/// Where the optimiser starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// The closed-form ridge solution at `lambda_f = 0`: the accuracy
    /// optimum, which makes fairness sweeps interpretable.
    #[default]
    RidgeWarmStart,
    /// All-zero coefficients.
    Zeros,
}

fn default_n_starts() -> usize {
    1
}

/// Full specification of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Ridge weight on the regression coefficients (intercept excluded).
    pub lambda_w: f64,
    /// Fairness penalty weight.
    pub lambda_f: f64,
    pub regulariser: Regulariser,
    #[serde(default)]
    pub optimiser: OptimiserConfig,
    #[serde(default)]
    pub init: InitStrategy,
    /// Seed for the random restarts beyond the first.
    #[serde(default)]
    pub init_seed: u64,
    /// Number of optimiser starts; the best final loss wins. The first start
    /// uses `init` exactly, later ones perturb it (the entropic objective is
    /// non-convex through the classifier refit).
    #[serde(default = "default_n_starts")]
    pub n_starts: usize,
}

impl TrainingConfig {
    pub fn new(lambda_w: f64, lambda_f: f64, regulariser: Regulariser) -> TrainingConfig {
        TrainingConfig {
            lambda_w,
            lambda_f,
            regulariser,
            optimiser: OptimiserConfig::default(),
            init: InitStrategy::default(),
            init_seed: 0,
            n_starts: 1,
        }
    }

    /// Plain ridge regression (no fairness term).
    pub fn ridge(lambda_w: f64) -> TrainingConfig {
        TrainingConfig::new(lambda_w, 0.0, Regulariser::None)
    }

    pub fn validate(&self) -> Result<()> {
        for (v, what) in [(self.lambda_w, "lambda_w"), (self.lambda_f, "lambda_f")] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::DimensionMismatch(format!(
                    "{what} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.optimiser.max_iter == 0 {
            return Err(Error::DimensionMismatch("max_iter must be >= 1".into()));
        }
        if self.n_starts == 0 {
            return Err(Error::DimensionMismatch("n_starts must be >= 1".into()));
        }
        self.regulariser.validate()
    }
}

/// A trained linear model. `theta` holds the feature weights followed by the
/// intercept in the last slot.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub theta: DVector<f64>,
    pub config: TrainingConfig,
    /// Loss at every accepted optimiser iterate (all starts' best run).
    pub train_loss_trace: Vec<f64>,
    pub converged: bool,
}

impl TrainedModel {
    pub fn weights(&self) -> &[f64] {
        &self.theta.as_slice()[..self.theta.len() - 1]
    }

    pub fn intercept(&self) -> f64 {
        self.theta[self.theta.len() - 1]
    }
}

/// One evaluated point of a fairness-accuracy frontier: a model trained on
/// the non-test folds, scored on the held-out fold.
#[derive(Debug, Clone)]
pub struct FrontierPoint {
    pub lambda_f: f64,
    pub fold: usize,
    /// Held-out coefficient of determination.
    pub r2: f64,
    pub nmi_ind: f64,
    pub nmi_sep: f64,
    pub nmi_suf: f64,
    /// Backend that produced the held-out dependence estimates; kept so
    /// callers can assert it differs from the training regulariser.
    pub estimator_id: String,
    pub train_seconds: f64,
    pub converged: bool,
}

/// `S = X theta_w + theta_0` for a parameter vector laid out as
/// `[w_1 .. w_P, theta_0]`.
pub fn predict_with(theta: &DVector<f64>, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if theta.len() != x.ncols() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries but X has {} columns (need P+1)",
            theta.len(),
            x.ncols()
        )));
    }
    let w = theta.rows(0, x.ncols());
    let mut s = x * w;
    s.add_scalar_mut(theta[theta.len() - 1]);
    Ok(s)
}

/// Scores for new rows under a trained model.
pub fn predict(model: &TrainedModel, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    predict_with(&model.theta, x)
}

/// Closed-form ridge solution with unpenalised intercept: solves
/// `(Xt' Xt + N * lambda_w * D) theta = Xt' y` where `Xt = [X | 1]` and `D`
/// is the identity with a zero in the intercept slot.
pub fn ridge_solution(x: &DMatrix<f64>, y: &DVector<f64>, lambda_w: f64) -> Result<DVector<f64>> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::LengthMismatch { context: "ridge target", expected: n, got: y.len() });
    }
    if n == 0 {
        return Err(Error::EmptyInput("ridge_solution"));
    }
    let p = x.ncols();
    let mut xt = DMatrix::zeros(n, p + 1);
    xt.view_mut((0, 0), (n, p)).copy_from(x);
    for r in 0..n {
        xt[(r, p)] = 1.0;
    }
    let mut normal = xt.tr_mul(&xt);
    let ridge = lambda_w * n as f64;
    for i in 0..p {
        normal[(i, i)] += ridge;
    }
    let rhs = xt.tr_mul(y);
    let chol = nalgebra::Cholesky::new(normal).ok_or(Error::SingularSystem)?;
    Ok(chol.solve(&rhs))
}

// ---------------------------------------------------------------------------
// Penalty values and score-space gradients.

fn class_count(a: &[usize]) -> Result<usize> {
    if a.is_empty() {
        return Err(Error::EmptyInput("sensitive classes"));
    }
    Ok(a.iter().copied().max().unwrap() + 1)
}

/// Value of a fairness penalty on a batch (no gradient). Lengths must agree;
/// for the pairwise baselines a `None` bandwidth resolves to `stdev(Y)`.
pub fn fairness_penalty(
    reg: &Regulariser,
    y: &DVector<f64>,
    s: &DVector<f64>,
    a: &[usize],
) -> Result<f64> {
    let k = class_count(a)?;
    if y.len() != a.len() || s.len() != a.len() {
        return Err(Error::LengthMismatch {
            context: "fairness_penalty inputs",
            expected: a.len(),
            got: y.len().min(s.len()),
        });
    }
    match reg {
        Regulariser::None => Ok(0.0),
        Regulariser::LspcEntropic { criterion, basis, lambda_c, beta } => {
            entropic_lspc_value(*criterion, *basis, y, s, a, k, *lambda_c, *beta)
        }
        Regulariser::LogisticEntropic { criterion, lambda_c } => {
            entropic_logistic_value(*criterion, y, s, a, k, *lambda_c)
        }
        Regulariser::BerkGroup { bandwidth } => {
            berk_penalty(BerkKind::Group, y, s, a, resolve_bandwidth(*bandwidth, y)?)
        }
        Regulariser::BerkIndividual { bandwidth } => {
            berk_penalty(BerkKind::Individual, y, s, a, resolve_bandwidth(*bandwidth, y)?)
        }
    }
}

/// Penalty value together with its gradient in the scores.
pub fn fairness_penalty_with_grad(
    reg: &Regulariser,
    y: &DVector<f64>,
    s: &DVector<f64>,
    a: &[usize],
) -> Result<(f64, DVector<f64>)> {
    let k = class_count(a)?;
    match reg {
        Regulariser::None => Ok((0.0, DVector::zeros(s.len()))),
        Regulariser::LspcEntropic { criterion, basis, lambda_c, beta } => match criterion {
            Criterion::Independence => {
                lspc_mean_logprob_grad(&[s], a, k, *basis, *beta, *lambda_c)
            }
            Criterion::Separation => {
                lspc_mean_logprob_grad(&[s, y], a, k, *basis, *beta, *lambda_c)
            }
            Criterion::Sufficiency => {
                let (sep, gsep) = lspc_mean_logprob_grad(&[s, y], a, k, *basis, *beta, *lambda_c)?;
                let (ind, gind) = lspc_mean_logprob_grad(&[s], a, k, *basis, *beta, *lambda_c)?;
                Ok((sep - ind, gsep - gind))
            }
        },
        Regulariser::LogisticEntropic { criterion, lambda_c } => match criterion {
            Criterion::Independence => logistic_mean_logprob_grad(&[s], a, k, *lambda_c),
            Criterion::Separation => logistic_mean_logprob_grad(&[s, y], a, k, *lambda_c),
            Criterion::Sufficiency => {
                let (sep, gsep) = logistic_mean_logprob_grad(&[s, y], a, k, *lambda_c)?;
                let (ind, gind) = logistic_mean_logprob_grad(&[s], a, k, *lambda_c)?;
                Ok((sep - ind, gsep - gind))
            }
        },
        Regulariser::BerkGroup { bandwidth } => {
            berk_value_grad(BerkKind::Group, y, s, a, resolve_bandwidth(*bandwidth, y)?)
        }
        Regulariser::BerkIndividual { bandwidth } => {
            berk_value_grad(BerkKind::Individual, y, s, a, resolve_bandwidth(*bandwidth, y)?)
        }
    }
}

fn resolve_bandwidth(bandwidth: Option<f64>, y: &DVector<f64>) -> Result<f64> {
    let bw = match bandwidth {
        Some(b) => b,
        None => stats::stdev(y.as_slice()),
    };
    if !bw.is_finite() || bw <= 0.0 {
        return Err(Error::DimensionMismatch(format!(
            "pairwise kernel bandwidth must be > 0, got {bw}"
        )));
    }
    Ok(bw)
}

/// Pairwise baseline penalties over the two sensitive groups:
///
/// ```text
/// individual = (1/(n0 n1)) sum_{i in A=0, j in A=1} d(y_i, y_j) (s_i - s_j)^2
/// group      = [ (1/(n0 n1)) sum d(y_i, y_j) (s_i - s_j) ]^2
/// ```
///
/// with the Gaussian target kernel `d(y, y') = exp(-(y - y')^2 / (2 bw^2))`.
/// Cost is genuinely quadratic in the group sizes.
pub fn berk_penalty(
    kind: BerkKind,
    y: &DVector<f64>,
    s: &DVector<f64>,
    a: &[usize],
    bandwidth: f64,
) -> Result<f64> {
    let (idx0, idx1) = berk_groups(y, s, a)?;
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::DimensionMismatch(format!(
            "pairwise kernel bandwidth must be > 0, got {bandwidth}"
        )));
    }
    let inv2bw2 = 1.0 / (2.0 * bandwidth * bandwidth);
    let norm = 1.0 / (idx0.len() as f64 * idx1.len() as f64);
    let mut acc = 0.0;
    for &i in &idx0 {
        for &j in &idx1 {
            let dy = y[i] - y[j];
            let d = (-dy * dy * inv2bw2).exp();
            let ds = s[i] - s[j];
            acc += match kind {
                BerkKind::Individual => d * ds * ds,
                BerkKind::Group => d * ds,
            };
        }
    }
    Ok(match kind {
        BerkKind::Individual => norm * acc,
        BerkKind::Group => (norm * acc) * (norm * acc),
    })
}

fn berk_groups(y: &DVector<f64>, s: &DVector<f64>, a: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = a.len();
    if n == 0 {
        return Err(Error::EmptyInput("berk_penalty"));
    }
    if y.len() != n || s.len() != n {
        return Err(Error::LengthMismatch {
            context: "berk_penalty inputs",
            expected: n,
            got: y.len().min(s.len()),
        });
    }
    let k = class_count(a)?;
    if k != 2 {
        return Err(Error::NeedsBinarySensitive(k));
    }
    let idx0: Vec<usize> = (0..n).filter(|&i| a[i] == 0).collect();
    let idx1: Vec<usize> = (0..n).filter(|&i| a[i] == 1).collect();
    if idx0.is_empty() {
        return Err(Error::EmptyClass(0));
    }
    if idx1.is_empty() {
        return Err(Error::EmptyClass(1));
    }
    Ok((idx0, idx1))
}

fn berk_value_grad(
    kind: BerkKind,
    y: &DVector<f64>,
    s: &DVector<f64>,
    a: &[usize],
    bandwidth: f64,
) -> Result<(f64, DVector<f64>)> {
    let (idx0, idx1) = berk_groups(y, s, a)?;
    let inv2bw2 = 1.0 / (2.0 * bandwidth * bandwidth);
    let norm = 1.0 / (idx0.len() as f64 * idx1.len() as f64);
    let mut grad = DVector::zeros(s.len());
    match kind {
        BerkKind::Individual => {
            let mut acc = 0.0;
            for &i in &idx0 {
                for &j in &idx1 {
                    let dy = y[i] - y[j];
                    let d = (-dy * dy * inv2bw2).exp();
                    let ds = s[i] - s[j];
                    acc += d * ds * ds;
                    let g = 2.0 * norm * d * ds;
                    grad[i] += g;
                    grad[j] -= g;
                }
            }
            Ok((norm * acc, grad))
        }
        BerkKind::Group => {
            let mut acc = 0.0;
            let mut tgrad = DVector::zeros(s.len());
            for &i in &idx0 {
                for &j in &idx1 {
                    let dy = y[i] - y[j];
                    let d = (-dy * dy * inv2bw2).exp();
                    acc += d * (s[i] - s[j]);
                    tgrad[i] += norm * d;
                    tgrad[j] -= norm * d;
                }
            }
            let t = norm * acc;
            grad.copy_from(&tgrad);
            grad *= 2.0 * t;
            Ok((t * t, grad))
        }
    }
}

/// Builds the conditioner matrix `[1, s, (y)]` shared by the entropic
/// penalties. The score is always column 1.
fn conditioner(cols: &[&DVector<f64>]) -> DMatrix<f64> {
    let n = cols[0].len();
    DMatrix::from_fn(n, cols.len() + 1, |r, c| if c == 0 { 1.0 } else { cols[c - 1][r] })
}

fn entropic_lspc_value(
    criterion: Criterion,
    basis: BasisKind,
    y: &DVector<f64>,
    s: &DVector<f64>,
    a: &[usize],
    k: usize,
    lambda_c: f64,
    beta: f64,
) -> Result<f64> {
    let mean_logprob = |cols: &[&DVector<f64>]| -> Result<f64> {
        let z = conditioner(cols);
        let spec = BasisSpec::new(basis, z.ncols());
        let model = lspc::LspcModel::fit(&z, a, k, spec, beta, lambda_c)?;
        let probs = model.posteriors(&z)?;
        let mut total = 0.0;
        for (i, &cls) in a.iter().enumerate() {
            total += probs[(i, cls)].ln();
        }
        Ok(total / a.len() as f64)
    };
    match criterion {
        Criterion::Independence => mean_logprob(&[s]),
        Criterion::Separation => mean_logprob(&[s, y]),
        Criterion::Sufficiency => Ok(mean_logprob(&[s, y])? - mean_logprob(&[s])?),
    }
}

fn entropic_logistic_value(
    criterion: Criterion,
    y: &DVector<f64>,
    s: &DVector<f64>,
    a: &[usize],
    k: usize,
    lambda_c: f64,
) -> Result<f64> {
    let mean_logprob = |cols: &[&DVector<f64>]| -> Result<f64> {
        let z = conditioner(cols);
        let spec = BasisSpec::feature_cross(z.ncols());
        let phi = spec.expand(&z);
        let model = lspc::logistic_fit(&phi, a, k, lambda_c)?;
        let probs = model.probabilities(&phi);
        let mut total = 0.0;
        for (i, &cls) in a.iter().enumerate() {
            total += probs[(i, cls)].max(1e-300).ln();
        }
        Ok(total / a.len() as f64)
    };
    match criterion {
        Criterion::Independence => mean_logprob(&[s]),
        Criterion::Separation => mean_logprob(&[s, y]),
        Criterion::Sufficiency => Ok(mean_logprob(&[s, y])? - mean_logprob(&[s])?),
    }
}

/// Mean log posterior probability of the observed classes under the
/// closed-form classifier, with its exact gradient in the scores.
///
/// The value is `(1/N) sum_i log p(a_i | z_i)` where the classifier weights
/// are the ridge least-squares solution refitted on the current conditioners.
/// The gradient propagates through that solve by the adjoint method: with
/// `G = Phi'Phi + lambda_c N I`, `B = Phi'T`, `V = G^-1 B` and activations
/// `U = Phi V`, the reverse pass is
///
/// ```text
/// Vbar = Phi' Ubar          C = G^-1 Vbar
/// Phibar = Ubar V' + T C' - Phi (V C' + C V')
/// ```
///
/// and each score gradient is `Phibar_i . dphi_i/ds_i`.
fn lspc_mean_logprob_grad(
    cols: &[&DVector<f64>],
    a: &[usize],
    k: usize,
    basis: BasisKind,
    beta: f64,
    lambda_c: f64,
) -> Result<(f64, DVector<f64>)> {
    let n = a.len();
    let z = conditioner(cols);
    let spec = BasisSpec::new(basis, z.ncols());
    let d = spec.output_dim();
    let phi = spec.expand(&z);
    let chol = gram_cholesky(&phi, lambda_c)?;
    // B = Phi' T accumulated column-per-class, exactly as the fit does.
    let mut b = DMatrix::zeros(d, k);
    for (i, &cls) in a.iter().enumerate() {
        for c in 0..d {
            b[(c, cls)] += phi[(i, c)];
        }
    }
    let v = chol.solve(&b); // D x K
    let u = &phi * &v; // N x K activations

    let mut value = 0.0;
    let mut ubar = DMatrix::zeros(n, k);
    let mut q = vec![0.0; k];
    for (i, &cls) in a.iter().enumerate() {
        for c in 0..k {
            q[c] = softplus(beta, u[(i, c)]);
        }
        let (lnp, gq) = log_floored_prob_grad_q(&q, cls, PROB_FLOOR);
        value += lnp;
        for c in 0..k {
            ubar[(i, c)] = gq[c] * softplus_deriv(beta, u[(i, c)]) / n as f64;
        }
    }
    value /= n as f64;

    let vbar = phi.tr_mul(&ubar); // D x K
    let cmat = chol.solve(&vbar); // D x K
    let m = &v * cmat.transpose() + &cmat * v.transpose(); // D x D
    // Phibar = Ubar V' + T C' - Phi M, assembled row-wise to avoid the N x D
    // temporaries.
    let ubar_vt = &ubar * v.transpose(); // N x D
    let phi_m = &phi * &m; // N x D
    let mut grad = DVector::zeros(n);
    let mut zrow = vec![0.0; z.ncols()];
    let mut dphi = vec![0.0; d];
    for i in 0..n {
        for c in 0..z.ncols() {
            zrow[c] = z[(i, c)];
        }
        spec.expand_row_grad_into(&zrow, 1, &mut dphi);
        let mut acc = 0.0;
        let cls = a[i];
        for c in 0..d {
            let phibar = ubar_vt[(i, c)] + cmat[(c, cls)] - phi_m[(i, c)];
            acc += phibar * dphi[c];
        }
        grad[i] = acc;
    }
    Ok((value, grad))
}

/// Mean log posterior probability under the nested logistic classifier with
/// its exact gradient in the scores.
///
/// The inner fit solves `omega*(s) = argmin J(omega, s)` to gradient
/// tolerance 1e-8, so the stationarity condition `dJ/domega = 0` defines
/// `omega*` implicitly and
///
/// ```text
/// dl/ds_j = dl/ds_j|_omega  -  u' r_j,   u = H^-1 dl/domega,
/// ```
///
/// where `H` is the inner Hessian at the optimum and `r_j` the mixed second
/// derivative of `J` in `(omega, s_j)`.
fn logistic_mean_logprob_grad(
    cols: &[&DVector<f64>],
    a: &[usize],
    k: usize,
    lambda_c: f64,
) -> Result<(f64, DVector<f64>)> {
    let n = a.len();
    let z = conditioner(cols);
    let spec = BasisSpec::feature_cross(z.ncols());
    let d = spec.output_dim();
    let phi = spec.expand(&z);
    let model = lspc::logistic_fit(&phi, a, k, lambda_c)?;
    let probs = model.probabilities(&phi);

    let mut value = 0.0;
    for (i, &cls) in a.iter().enumerate() {
        value += probs[(i, cls)].max(1e-300).ln();
    }
    value /= n as f64;

    let dim = (k - 1) * d;
    // dl/domega, flattened to match the row-major (k-1) x d weight layout.
    let mut dl_domega: DVector<f64> = DVector::zeros(dim);
    for (i, &cls) in a.iter().enumerate() {
        for m in 1..k {
            let coef = (f64::from(u8::from(cls == m)) - probs[(i, m)]) / n as f64;
            let base = (m - 1) * d;
            for c in 0..d {
                dl_domega[base + c] += coef * phi[(i, c)];
            }
        }
    }

    // Inner Hessian at the fitted weights (ridge diagonal included).
    let w_flat = DVector::from_fn(dim, |i, _| model.weights[(i / d, i % d)]);
    let hess = lspc::logistic_hessian(&w_flat, &phi, k, lambda_c);
    let u: DVector<f64> = match nalgebra::Cholesky::new(hess.clone()) {
        Some(ch) => ch.solve(&dl_domega),
        None => hess
            .full_piv_lu()
            .solve(&dl_domega)
            .ok_or(Error::SingularSystem)?,
    };

    let w = &model.weights; // (k-1) x d
    let mut grad = DVector::zeros(n);
    let mut zrow = vec![0.0; z.ncols()];
    let mut dphi = vec![0.0; d];
    for j in 0..n {
        for c in 0..z.ncols() {
            zrow[c] = z[(j, c)];
        }
        spec.expand_row_grad_into(&zrow, 1, &mut dphi);
        // Direct term: (1/N)[w_{a_j} - sum_m p_m w_m] . dphi (w_0 = 0).
        let mut eta_prime = vec![0.0; k]; // index by class, class 0 stays 0
        for m in 1..k {
            let mut acc = 0.0;
            for c in 0..d {
                acc += w[(m - 1, c)] * dphi[c];
            }
            eta_prime[m] = acc;
        }
        let mut direct = 0.0;
        for m in 1..k {
            direct += (f64::from(u8::from(a[j] == m)) - probs[(j, m)]) * eta_prime[m];
        }
        direct /= n as f64;

        // Correction term u' r_j, accumulated block by block.
        let mut corr = 0.0;
        for m in 1..k {
            let mut alpha = 0.0;
            for l in 1..k {
                alpha += probs[(j, m)]
                    * (f64::from(u8::from(m == l)) - probs[(j, l)])
                    * eta_prime[l];
            }
            let t_jm = f64::from(u8::from(a[j] == m));
            let beta_coef = probs[(j, m)] - t_jm;
            let base = (m - 1) * d;
            for c in 0..d {
                corr += u[base + c] * (alpha * phi[(j, c)] + beta_coef * dphi[c]) / n as f64;
            }
        }
        grad[j] = direct - corr;
    }
    Ok((value, grad))
}

// ---------------------------------------------------------------------------
// Total objective.

/// `(1/N) ||Y - S||^2 + lambda_w ||theta_w||^2 + lambda_f * penalty`.
/// The penalty is skipped entirely when `lambda_f = 0`.
pub fn total_loss(theta: &DVector<f64>, ds: &Dataset, config: &TrainingConfig) -> Result<f64> {
    config.validate()?;
    let s = predict_with(theta, &ds.features)?;
    let n = ds.n() as f64;
    let resid = &s - &ds.target;
    let fit = resid.norm_squared() / n;
    let w = theta.rows(0, ds.p());
    let ridge = config.lambda_w * w.norm_squared();
    let pen = if config.lambda_f > 0.0 {
        fairness_penalty(&config.regulariser, &ds.target, &s, &ds.sensitive)?
    } else {
        0.0
    };
    let loss = fit + ridge + config.lambda_f * pen;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok(loss)
}

/// Loss together with its exact gradient in `theta`.
pub fn loss_and_gradient(
    theta: &DVector<f64>,
    ds: &Dataset,
    config: &TrainingConfig,
) -> Result<(f64, DVector<f64>)> {
    config.validate()?;
    let s = predict_with(theta, &ds.features)?;
    let n = ds.n() as f64;
    let p = ds.p();
    let resid = &s - &ds.target;
    let fit = resid.norm_squared() / n;
    let w = theta.rows(0, p);
    let ridge = config.lambda_w * w.norm_squared();

    let mut sbar = resid * (2.0 / n);
    let mut loss = fit + ridge;
    if config.lambda_f > 0.0 {
        let (pen, pen_grad) =
            fairness_penalty_with_grad(&config.regulariser, &ds.target, &s, &ds.sensitive)?;
        loss += config.lambda_f * pen;
        sbar += pen_grad * config.lambda_f;
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }

    let mut grad = DVector::zeros(p + 1);
    let gw = ds.features.tr_mul(&sbar);
    for i in 0..p {
        grad[i] = gw[i] + 2.0 * config.lambda_w * theta[i];
    }
    grad[p] = sbar.sum();
    Ok((loss, grad))
}

/// Gradient of [`total_loss`] in `theta`.
pub fn loss_gradient(
    theta: &DVector<f64>,
    ds: &Dataset,
    config: &TrainingConfig,
) -> Result<DVector<f64>> {
    loss_and_gradient(theta, ds, config).map(|(_, g)| g)
}

/// Trains a model by limited-memory quasi-Newton descent with strong-Wolfe
/// line search (history `history_size`, stop at `||grad||_inf < grad_tol` or
/// `max_iter`). Deterministic given `init_seed`. A line-search failure
/// returns the best iterate seen with `converged = false`, never an error.
pub fn train(ds: &Dataset, config: &TrainingConfig) -> Result<TrainedModel> {
    config.validate()?;
    let dim = ds.p() + 1;
    let base = match config.init {
        InitStrategy::RidgeWarmStart => ridge_solution(&ds.features, &ds.target, config.lambda_w)?,
        InitStrategy::Zeros => DVector::zeros(dim),
    };
    let params = LbfgsParams {
        max_iter: config.optimiser.max_iter,
        grad_tol: config.optimiser.grad_tol,
        history: config.optimiser.history_size,
        ..LbfgsParams::default()
    };

    let mut best: Option<optim::LbfgsResult> = None;
    let mut first_error: Option<Error> = None;
    for start in 0..config.n_starts {
        let x0 = if start == 0 {
            base.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(
                config.init_seed ^ (start as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            DVector::from_fn(dim, |i, _| {
                let eps: f64 = StandardNormal.sample(&mut rng);
                base[i] + 0.5 * eps
            })
        };
        // Surface real errors (bad config, degenerate classifier fit) from
        // the starting point; transient failures at trial steps inside the
        // line search just reject the step.
        if let Err(e) = loss_and_gradient(&x0, ds, config) {
            first_error = first_error.or(Some(e));
            continue;
        }
        let result = optim::minimize(
            |theta| match loss_and_gradient(theta, ds, config) {
                Ok(fg) => fg,
                Err(_) => (f64::INFINITY, DVector::zeros(dim)),
            },
            x0,
            &params,
        )?;
        let better = match &best {
            None => true,
            Some(b) => result.f < b.f,
        };
        if better {
            best = Some(result);
        }
    }
    match best {
        Some(res) => Ok(TrainedModel {
            theta: res.x,
            config: config.clone(),
            train_loss_trace: res.trace,
            converged: res.converged,
        }),
        None => Err(first_error.unwrap_or(Error::NonFiniteLoss)),
    }
}

/// Coefficient of determination `1 - SS_res / SS_tot` against the mean of
/// `y` itself. A constant `y` yields 1 for a perfect fit and `-inf`
/// otherwise.
pub fn r_squared(y: &DVector<f64>, pred: &DVector<f64>) -> f64 {
    let mean = y.mean();
    let mut ss_tot = 0.0;
    for v in y.iter() {
        ss_tot += (v - mean) * (v - mean);
    }
    let ss_res = (y - pred).norm_squared();
    if ss_tot <= 0.0 {
        return if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - ss_res / ss_tot
}

/// Trains on every fold except `fold_id`, evaluates on the held-out fold:
/// R-squared plus all three normalised dependence measures of the held-out
/// scores, estimated with `eval_backend` (pass a backend different from the
/// training regulariser's classifier to keep evaluation independent).
/// Features are restandardised on the training fold only.
pub fn evaluate_fold(
    ds: &Dataset,
    folds: &FoldAssignment,
    fold_id: usize,
    config: &TrainingConfig,
    eval_backend: &EstimatorBackend,
) -> Result<FrontierPoint> {
    if fold_id >= folds.n_folds {
        return Err(Error::BadFoldCount { folds: fold_id, n: folds.n_folds });
    }
    let (train_idx, test_idx) = folds.split(fold_id);
    let mut train_ds = ds.subset(&train_idx);
    let mut test_ds = ds.subset(&test_idx);
    let (scaler, train_x) = Standardizer::fit_transform(&train_ds.features);
    train_ds.features = train_x;
    test_ds.features = scaler.transform(&test_ds.features);

    let t0 = Instant::now();
    let model = train(&train_ds, config)?;
    let train_seconds = t0.elapsed().as_secs_f64();

    let s_test = predict(&model, &test_ds.features)?;
    let r2 = r_squared(&test_ds.target, &s_test);
    let mut nmi = [0.0; 3];
    let mut estimator_id = String::new();
    for (slot, criterion) in Criterion::all().into_iter().enumerate() {
        let est = estimate_nmi(criterion, &test_ds.target, &s_test, &test_ds.sensitive, eval_backend)?;
        nmi[slot] = est.nmi;
        estimator_id = est.estimator_id;
    }
    Ok(FrontierPoint {
        lambda_f: config.lambda_f,
        fold: fold_id,
        r2,
        nmi_ind: nmi[0],
        nmi_sep: nmi[1],
        nmi_suf: nmi[2],
        estimator_id,
        train_seconds,
        converged: model.converged,
    })
}
