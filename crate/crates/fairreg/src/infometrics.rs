//! Entropy and mutual-information estimates for fairness measurement.
//!
//! Dependence between a score `S` and a sensitive class `A` (optionally
//! conditioned on the target `Y`) is measured by normalised plug-in
//! estimates: a probabilistic classifier approximates the posterior of `A`
//! given the conditioners, and averages of log posterior ratios estimate the
//! (conditional) mutual information. Dividing by the matching (conditional)
//! entropy of `A` maps every criterion onto a common `[0, 1]` unfairness
//! scale. All entropies are in nats.
//!
//! Ground truth for synthetic scenarios comes from [`monte_carlo_mi`], which
//! averages exact log density ratios of the known Gaussian-mixture joint —
//! no classifier involved.

use crate::data::Scenario;
use crate::error::{Error, Result};
use crate::lspc::{
    self, fit_predict_logistic, floor_probability_rows, prepend_intercept, BasisKind, BasisSpec,
    LogisticModel, LspcModel,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// A normaliser at or below this many nats means the sensitive attribute
/// carries (conditionally) no usable entropy and the ratio is refused.
pub const NORMALISER_TOL: f64 = 1e-6;

/// Softplus sharpness used by the measurement backends. Estimation never
/// differentiates through the classifier, so the correction can sit much
/// closer to the exact `max(0, ·)` clamp than the smooth training default:
/// at `beta = 10` a cleanly rejected class still keeps probability
/// `ln(2)/10 ≈ 0.07`, which caps the measurable dependence near 0.8 of its
/// true value on well-separated data. `1e4` leaves a residual of
/// `ln(2)/1e4 < 1e-4` while staying overflow-safe.
pub const ESTIMATION_BETA: f64 = 1e4;

/// The three fairness criteria, each an independence statement made
/// quantitative by the matching normalised (conditional) mutual information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// `S ⊥ A`, measured by `MI(S; A) / H(A)`.
    Independence,
    /// `S ⊥ A | Y`, measured by `MI(S; A | Y) / H(A | Y)`.
    Separation,
    /// `Y ⊥ A | S`, measured by `MI(Y; A | S) / H(A | S)`.
    Sufficiency,
}

impl Criterion {
    pub fn all() -> [Criterion; 3] {
        [Criterion::Independence, Criterion::Separation, Criterion::Sufficiency]
    }

    pub fn label(&self) -> &'static str {
        match self {
            Criterion::Independence => "independence",
            Criterion::Separation => "separation",
            Criterion::Sufficiency => "sufficiency",
        }
    }
}

/// A mutual-information estimate together with the entropy normaliser that
/// maps it to the `[0, 1]` scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiEstimate {
    /// Plug-in (conditional) mutual information, nats.
    pub mi: f64,
    /// Matching (conditional) entropy of the sensitive attribute, nats.
    pub normaliser: f64,
    /// `mi / normaliser`.
    pub nmi: f64,
    /// Which backend produced the posteriors.
    pub estimator_id: String,
}

/// Classifier family used to approximate posteriors of `A` given the
/// conditioners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimatorBackend {
    /// Closed-form least-squares classifier with softplus posteriors.
    Lspc {
        basis: BasisKind,
        lambda_c: f64,
        beta: f64,
    },
    /// Iteratively fitted multinomial logistic classifier on the quadratic
    /// feature cross.
    LogisticQuad { lambda_c: f64 },
    /// Multinomial logistic classifier on random Fourier features
    /// (kitchen sinks); bandwidth defaults to the median pairwise distance
    /// of a subsample.
    LrRks {
        n_features: usize,
        bandwidth: Option<f64>,
        lambda_c: f64,
        seed: u64,
    },
}

impl EstimatorBackend {
    pub fn lspc_linear() -> Self {
        EstimatorBackend::Lspc {
            basis: BasisKind::Identity,
            lambda_c: lspc::DEFAULT_LAMBDA_C,
            beta: ESTIMATION_BETA,
        }
    }

    pub fn lspc_quad() -> Self {
        EstimatorBackend::Lspc {
            basis: BasisKind::FeatureCross,
            lambda_c: lspc::DEFAULT_LAMBDA_C,
            beta: ESTIMATION_BETA,
        }
    }

    pub fn logistic_quad() -> Self {
        EstimatorBackend::LogisticQuad { lambda_c: lspc::DEFAULT_LAMBDA_C }
    }

    pub fn lr_rks(seed: u64) -> Self {
        EstimatorBackend::LrRks { n_features: 100, bandwidth: None, lambda_c: 1e-3, seed }
    }

    pub fn id(&self) -> String {
        match self {
            EstimatorBackend::Lspc { basis: BasisKind::Identity, .. } => "lspc-linear".into(),
            EstimatorBackend::Lspc { basis: BasisKind::FeatureCross, .. } => "lspc-quad".into(),
            EstimatorBackend::LogisticQuad { .. } => "logistic-quad".into(),
            EstimatorBackend::LrRks { .. } => "lr-rks".into(),
        }
    }

    /// Fits the backend on `(vars, a)` and returns floored posterior
    /// probabilities evaluated on the same rows (`n x k`). `vars` holds the
    /// raw conditioning columns; the intercept is added internally.
    pub fn fit_posteriors(&self, vars: &DMatrix<f64>, a: &[usize], k: usize) -> Result<DMatrix<f64>> {
        match self {
            EstimatorBackend::Lspc { basis, lambda_c, beta } => {
                let z = prepend_intercept(vars);
                let spec = BasisSpec::new(*basis, z.ncols());
                let model = LspcModel::fit(&z, a, k, spec, *beta, *lambda_c)?;
                model.posteriors(&z)
            }
            EstimatorBackend::LogisticQuad { lambda_c } => {
                let z = prepend_intercept(vars);
                fit_predict_logistic(&z, a, k, *lambda_c, BasisSpec::feature_cross(z.ncols()))
            }
            EstimatorBackend::LrRks { n_features, bandwidth, lambda_c, seed } => {
                let model = lr_rks_fit(vars, a, k, *n_features, *bandwidth, *lambda_c, *seed)?;
                Ok(model.posteriors(vars))
            }
        }
    }
}

/// Empirical entropy of a class vector in nats; classes with zero count
/// contribute nothing.
pub fn entropy(a: &[usize]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptyInput("entropy"));
    }
    let k = a.iter().copied().max().unwrap() + 1;
    let mut counts = vec![0usize; k];
    for &c in a {
        counts[c] += 1;
    }
    let n = a.len() as f64;
    let mut h = 0.0;
    for &c in &counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.ln();
        }
    }
    Ok(h)
}

/// Plug-in conditional entropy `H(A | Z) = -(1/N) sum_i log p(a_i | z_i)`,
/// with posteriors estimated by `backend` on the same rows.
pub fn cond_entropy(a: &[usize], vars: &DMatrix<f64>, backend: &EstimatorBackend) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptyInput("cond_entropy"));
    }
    let k = a.iter().copied().max().unwrap() + 1;
    let probs = backend.fit_posteriors(vars, a, k)?;
    Ok(mean_neg_log_prob(&probs, a))
}

fn mean_neg_log_prob(probs: &DMatrix<f64>, a: &[usize]) -> f64 {
    let mut total = 0.0;
    for (i, &cls) in a.iter().enumerate() {
        total -= probs[(i, cls)].ln();
    }
    total / a.len() as f64
}

fn mean_log_ratio(num: &DMatrix<f64>, den: &DMatrix<f64>, a: &[usize]) -> f64 {
    let mut total = 0.0;
    for (i, &cls) in a.iter().enumerate() {
        total += (num[(i, cls)] / den[(i, cls)]).ln();
    }
    total / a.len() as f64
}

fn column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(v.len(), 1, |r, _| v[r])
}

fn two_columns(first: &DVector<f64>, second: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(first.len(), 2, |r, c| if c == 0 { first[r] } else { second[r] })
}

fn checked_ratio(mi: f64, normaliser: f64, estimator_id: String) -> Result<MiEstimate> {
    if normaliser <= NORMALISER_TOL {
        return Err(Error::NormaliserDegenerate { value: normaliser });
    }
    Ok(MiEstimate { mi, normaliser, nmi: mi / normaliser, estimator_id })
}

/// Normalised plug-in dependence estimate for one criterion.
///
/// * Independence: `MI(S; A)` via `p(a | s)` against the class priors,
///   normalised by `H(A)`.
/// * Separation: `MI(S; A | Y)` via `p(a | s, y)` against `p(a | y)`,
///   normalised by the plug-in `H(A | Y)`.
/// * Sufficiency: `MI(Y; A | S)` via `p(a | s, y)` against `p(a | s)`,
///   normalised by the plug-in `H(A | S)`.
///
/// Both classifiers inside a ratio use the same backend fitted on the same
/// rows, so the ratio cancels shared approximation error.
pub fn estimate_nmi(
    criterion: Criterion,
    y: &DVector<f64>,
    s: &DVector<f64>,
    a: &[usize],
    backend: &EstimatorBackend,
) -> Result<MiEstimate> {
    let n = a.len();
    if n == 0 {
        return Err(Error::EmptyInput("estimate_nmi"));
    }
    if y.len() != n || s.len() != n {
        return Err(Error::LengthMismatch { context: "estimate_nmi inputs", expected: n, got: y.len().min(s.len()) });
    }
    let k = a.iter().copied().max().unwrap() + 1;
    let id = backend.id();
    match criterion {
        Criterion::Independence => {
            let p_s = backend.fit_posteriors(&column(s), a, k)?;
            let h_a = entropy(a)?;
            let mut counts = vec![0usize; k];
            for &c in a {
                counts[c] += 1;
            }
            let mut mi = 0.0;
            for (i, &cls) in a.iter().enumerate() {
                let prior = counts[cls] as f64 / n as f64;
                mi += (p_s[(i, cls)] / prior).ln();
            }
            checked_ratio(mi / n as f64, h_a, id)
        }
        Criterion::Separation => {
            let p_sy = backend.fit_posteriors(&two_columns(s, y), a, k)?;
            let p_y = backend.fit_posteriors(&column(y), a, k)?;
            let mi = mean_log_ratio(&p_sy, &p_y, a);
            let h_a_given_y = mean_neg_log_prob(&p_y, a);
            checked_ratio(mi, h_a_given_y, id)
        }
        Criterion::Sufficiency => {
            let p_sy = backend.fit_posteriors(&two_columns(s, y), a, k)?;
            let p_s = backend.fit_posteriors(&column(s), a, k)?;
            let mi = mean_log_ratio(&p_sy, &p_s, a);
            let h_a_given_s = mean_neg_log_prob(&p_s, a);
            checked_ratio(mi, h_a_given_s, id)
        }
    }
}

// ---------------------------------------------------------------------------
// Random Fourier feature backend.

/// Logistic classifier on random cosine features approximating a Gaussian
/// kernel.
#[derive(Debug, Clone)]
pub struct RksModel {
    /// `n_features x input_dim` frequency matrix.
    pub omegas: DMatrix<f64>,
    /// Phase offsets in `[0, 2*pi)`.
    pub phases: Vec<f64>,
    pub bandwidth: f64,
    logistic: LogisticModel,
}

impl RksModel {
    /// `[1 | sqrt(2/m) * cos(omega  z + b)]` feature map.
    fn features(&self, vars: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.omegas.nrows();
        let scale = (2.0 / m as f64).sqrt();
        let proj = vars * self.omegas.transpose(); // N x m
        let mut phi = DMatrix::zeros(vars.nrows(), m + 1);
        for r in 0..vars.nrows() {
            phi[(r, 0)] = 1.0;
            for j in 0..m {
                phi[(r, j + 1)] = scale * (proj[(r, j)] + self.phases[j]).cos();
            }
        }
        phi
    }

    /// Floored posterior probabilities for new rows.
    pub fn posteriors(&self, vars: &DMatrix<f64>) -> DMatrix<f64> {
        let phi = self.features(vars);
        floor_probability_rows(&self.logistic.probabilities(&phi))
    }
}

/// Median pairwise Euclidean distance over a subsample of at most 1000 rows;
/// falls back to 1 when the rows are degenerate.
pub fn median_heuristic_bandwidth(vars: &DMatrix<f64>, seed: u64) -> f64 {
    let n = vars.nrows();
    let take = n.min(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<usize> = if take == n {
        (0..n).collect()
    } else {
        rand::seq::index::sample(&mut rng, n, take).into_vec()
    };
    let mut dists = Vec::with_capacity(take * (take - 1) / 2);
    for i in 0..take {
        for j in (i + 1)..take {
            let mut d2 = 0.0;
            for c in 0..vars.ncols() {
                let diff = vars[(idx[i], c)] - vars[(idx[j], c)];
                d2 += diff * diff;
            }
            dists.push(d2.sqrt());
        }
    }
    let med = crate::stats::median(&dists);
    if med.is_finite() && med > 1e-12 {
        med
    } else {
        1.0
    }
}

/// Draws the random feature map (frequencies scaled by the bandwidth,
/// uniform phases) and fits the ridge-penalised logistic read-out.
/// Deterministic in `seed`.
pub fn lr_rks_fit(
    vars: &DMatrix<f64>,
    a: &[usize],
    k: usize,
    n_features: usize,
    bandwidth: Option<f64>,
    lambda_c: f64,
    seed: u64,
) -> Result<RksModel> {
    if vars.nrows() == 0 {
        return Err(Error::EmptyInput("lr_rks_fit"));
    }
    let bw = match bandwidth {
        Some(b) if b > 0.0 => b,
        Some(_) => return Err(Error::DimensionMismatch("bandwidth must be positive".into())),
        None => median_heuristic_bandwidth(vars, seed ^ 0x5bd1_e995),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omegas = DMatrix::from_fn(n_features, vars.ncols(), |_, _| {
        rng.sample::<f64, _>(StandardNormal) / bw
    });
    let phases: Vec<f64> = (0..n_features)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    let logistic = LogisticModel { weights: DMatrix::zeros(k - 1, n_features + 1), k };
    let mut model = RksModel { omegas, phases, bandwidth: bw, logistic };
    let phi = model.features(vars);
    // Many cosine features need less machine-precision polish than the
    // low-dimensional quadratic fit; 1e-6 keeps the fit fast and well inside
    // estimator noise.
    model.logistic = lspc::logistic_fit_tol(&phi, a, k, lambda_c, 1e-6)?;
    Ok(model)
}

// ---------------------------------------------------------------------------
// Monte-Carlo oracle.

/// Which dependence of a [`Scenario`] the oracle integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiTarget {
    /// `MI(S; A)` — the independence target.
    ScoreClass,
    /// `MI(S; A | Y)` — the separation target.
    ScoreClassGivenTarget,
    /// `MI(Y; A | S)` — the sufficiency target.
    TargetClassGivenScore,
}

impl MiTarget {
    pub fn for_criterion(c: Criterion) -> MiTarget {
        match c {
            Criterion::Independence => MiTarget::ScoreClass,
            Criterion::Separation => MiTarget::ScoreClassGivenTarget,
            Criterion::Sufficiency => MiTarget::TargetClassGivenScore,
        }
    }
}

const LOG_2PI: f64 = 1.8378770664093453;

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LOG_2PI + var.ln() + d * d / var)
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Per-class marginal and conditional parameters of the bivariate Gaussian,
/// with component 0 = Y and component 1 = S.
struct ClassGaussian {
    log_prior: f64,
    mean: [f64; 2],
    var: [f64; 2],
    cov: f64,
}

impl ClassGaussian {
    fn new(sc: &Scenario, a: usize) -> ClassGaussian {
        let m = sc.mean(a);
        let c = sc.cov(a);
        ClassGaussian {
            log_prior: sc.prior(a).ln(),
            mean: [m[0], m[1]],
            var: [c[(0, 0)], c[(1, 1)]],
            cov: c[(0, 1)],
        }
    }

    /// `log N(value; marginal of component `dim`)`.
    fn log_marginal(&self, dim: usize, value: f64) -> f64 {
        log_normal_pdf(value, self.mean[dim], self.var[dim])
    }

    /// `log N(value_of_dim; conditional on the other component)`.
    fn log_conditional(&self, dim: usize, value: f64, given: f64) -> f64 {
        let other = 1 - dim;
        let slope = self.cov / self.var[other];
        let mean = self.mean[dim] + slope * (given - self.mean[other]);
        let var = self.var[dim] - self.cov * self.cov / self.var[other];
        log_normal_pdf(value, mean, var)
    }
}

/// Monte-Carlo estimate of a scenario's mutual information with its standard
/// error: the sample mean of exact log density ratios under the known joint.
///
/// Every density in the ratio is available in closed form (Gaussian
/// conditionals and two-component mixtures), so the only error is Monte
/// Carlo; `stderr` is the standard error of the sampled log ratios.
pub fn monte_carlo_mi(
    sc: &Scenario,
    target: MiTarget,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    sc.validate()?;
    if n_samples < 2 {
        return Err(Error::EmptyInput("monte_carlo_mi needs at least 2 samples"));
    }
    let classes = [ClassGaussian::new(sc, 0), ClassGaussian::new(sc, 1)];
    // Cholesky factors for sampling.
    let chol: Vec<[f64; 3]> = (0..2)
        .map(|a| {
            let g = &classes[a];
            let l00 = g.var[0].sqrt();
            let l10 = g.cov / l00;
            let inner = g.var[1] - l10 * l10;
            if inner <= 0.0 {
                return Err(Error::CovarianceNotPd);
            }
            Ok([l00, l10, inner.sqrt()])
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let a = usize::from(rng.random::<f64>() < sc.p);
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let g = &classes[a];
        let l = &chol[a];
        let y = g.mean[0] + l[0] * e1;
        let s = g.mean[1] + l[1] * e1 + l[2] * e2;

        let log_ratio = match target {
            MiTarget::ScoreClass => {
                // log p(s | a) - log p(s)
                let num = classes[a].log_marginal(1, s);
                let den = log_sum_exp(
                    classes[0].log_prior + classes[0].log_marginal(1, s),
                    classes[1].log_prior + classes[1].log_marginal(1, s),
                );
                num - den
            }
            MiTarget::ScoreClassGivenTarget => {
                // log p(s | y, a) - log p(s | y), with class weights p(a | y).
                let num = classes[a].log_conditional(1, s, y);
                let log_joint = |b: usize| classes[b].log_prior + classes[b].log_marginal(0, y);
                let log_py = log_sum_exp(log_joint(0), log_joint(1));
                let den = log_sum_exp(
                    log_joint(0) - log_py + classes[0].log_conditional(1, s, y),
                    log_joint(1) - log_py + classes[1].log_conditional(1, s, y),
                );
                num - den
            }
            MiTarget::TargetClassGivenScore => {
                // log p(y | s, a) - log p(y | s), with class weights p(a | s).
                let num = classes[a].log_conditional(0, y, s);
                let log_joint = |b: usize| classes[b].log_prior + classes[b].log_marginal(1, s);
                let log_ps = log_sum_exp(log_joint(0), log_joint(1));
                let den = log_sum_exp(
                    log_joint(0) - log_ps + classes[0].log_conditional(0, y, s),
                    log_joint(1) - log_ps + classes[1].log_conditional(0, y, s),
                );
                num - den
            }
        };
        sum += log_ratio;
        sum_sq += log_ratio * log_ratio;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}
