//! Least-squares probabilistic classification.
//!
//! A least-squares fit of one-hot class indicators on basis-expanded
//! conditioners gives class scores in closed form; a smooth softplus rectifier
//! followed by row normalisation turns the scores into posterior
//! probabilities that are differentiable in both the weights and the
//! conditioners. The closed form is
//!
//! ```text
//! W* = (Phi' Phi + lambda_c * N * I)^-1  Phi' 1_A
//! ```
//!
//! solved through a symmetric positive-definite factorisation of the `D x D`
//! Gram matrix, so fitting costs `O(N * D^2)`. The ridge weight is scaled by
//! `N` to keep its meaning stable across sample sizes.
//!
//! This module also hosts a ridge-penalised multinomial logistic classifier
//! on the same basis expansions. It is the slower, iteratively fitted
//! reference model used to cross-check the least-squares posteriors.

use crate::error::{Error, Result};
use crate::optim::{self, LbfgsParams};
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Probabilities are clamped below at this value (then renormalised) so
/// logarithms of posteriors stay finite.
pub const PROB_FLOOR: f64 = 1e-6;
/// Softplus sharpness: within 1e-4 of `max(0, t)` for `|t| >= 1` while
/// keeping gradients bounded.
pub const DEFAULT_BETA: f64 = 10.0;
/// Default classifier ridge weight (sample-size invariant thanks to the `N`
/// scaling in the Gram matrix).
pub const DEFAULT_LAMBDA_C: f64 = 1e-3;
/// Gradient tolerance for the nested logistic fit.
pub const LOGISTIC_GRAD_TOL: f64 = 1e-8;
const LOGISTIC_MAX_ITER: usize = 500;

/// Family of basis expansions applied to a conditioner vector `z` whose
/// leading component is the constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// `phi(z) = z` (the conditioner already starts with the intercept 1).
    Identity,
    /// All monomials of degree two or less in the non-constant components.
    FeatureCross,
}

/// A basis expansion `R^p -> R^D` for conditioners `z = [1, u_1, .., u_{p-1}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub input_dim: usize,
}

impl BasisSpec {
    pub fn identity(input_dim: usize) -> Self {
        BasisSpec { kind: BasisKind::Identity, input_dim }
    }

    pub fn feature_cross(input_dim: usize) -> Self {
        BasisSpec { kind: BasisKind::FeatureCross, input_dim }
    }

    pub fn new(kind: BasisKind, input_dim: usize) -> Self {
        BasisSpec { kind, input_dim }
    }

    /// Expanded dimension `D`. For the feature cross on `p` inputs this is
    /// `1 + (p-1) + (p-1)p/2`: the constant, the linear terms and every
    /// product `u_i u_j` with `i <= j`.
    pub fn output_dim(&self) -> usize {
        let m = self.input_dim - 1;
        match self.kind {
            BasisKind::Identity => self.input_dim,
            BasisKind::FeatureCross => 1 + m + m * (m + 1) / 2,
        }
    }

    /// Writes `phi(z)` into `out`. Feature-cross column order is fixed:
    /// constant, linear terms, then products `u_i u_j` for `i <= j` in
    /// lexicographic `(i, j)` order — `[1, s, y]` expands to
    /// `[1, s, y, s^2, s*y, y^2]`.
    pub fn expand_row_into(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.input_dim);
        debug_assert_eq!(out.len(), self.output_dim());
        match self.kind {
            BasisKind::Identity => out.copy_from_slice(z),
            BasisKind::FeatureCross => {
                let m = self.input_dim - 1;
                out[0] = 1.0;
                out[1..=m].copy_from_slice(&z[1..]);
                let mut idx = 1 + m;
                for i in 1..=m {
                    for j in i..=m {
                        out[idx] = z[i] * z[j];
                        idx += 1;
                    }
                }
            }
        }
    }

    /// Expands every row of `z` (an `N x p` matrix) to `N x D`.
    pub fn expand(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(z.ncols(), self.input_dim, "conditioner width != basis input_dim");
        let d = self.output_dim();
        let mut phi = DMatrix::zeros(z.nrows(), d);
        let mut row = vec![0.0; self.input_dim];
        let mut out = vec![0.0; d];
        for r in 0..z.nrows() {
            for c in 0..self.input_dim {
                row[c] = z[(r, c)];
            }
            self.expand_row_into(&row, &mut out);
            for c in 0..d {
                phi[(r, c)] = out[c];
            }
        }
        phi
    }

    /// Derivative of `phi(z)` with respect to input component `wrt`,
    /// written into `out`.
    pub fn expand_row_grad_into(&self, z: &[f64], wrt: usize, out: &mut [f64]) {
        debug_assert!(wrt < self.input_dim);
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.kind {
            BasisKind::Identity => out[wrt] = 1.0,
            BasisKind::FeatureCross => {
                let m = self.input_dim - 1;
                if wrt == 0 {
                    return; // constant slot
                }
                out[wrt] = 1.0;
                let mut idx = 1 + m;
                for i in 1..=m {
                    for j in i..=m {
                        if i == wrt {
                            out[idx] += z[j];
                        }
                        if j == wrt {
                            out[idx] += z[i];
                        }
                        idx += 1;
                    }
                }
            }
        }
    }
}

/// `[1 | vars]`: prepends the intercept column expected by every basis.
pub fn prepend_intercept(vars: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(vars.nrows(), vars.ncols() + 1);
    for r in 0..vars.nrows() {
        z[(r, 0)] = 1.0;
        for c in 0..vars.ncols() {
            z[(r, c + 1)] = vars[(r, c)];
        }
    }
    z
}

/// Numerically safe `log(1 + exp(beta * t)) / beta`; equals `t` to double
/// precision once `beta * t > 30`.
pub fn softplus(beta: f64, t: f64) -> f64 {
    let bt = beta * t;
    if bt > 30.0 {
        t
    } else if bt < -30.0 {
        bt.exp() / beta
    } else {
        bt.exp().ln_1p() / beta
    }
}

/// Derivative of [`softplus`] in `t`: the logistic sigmoid of `beta * t`.
pub fn softplus_deriv(beta: f64, t: f64) -> f64 {
    let bt = beta * t;
    if bt > 30.0 {
        1.0
    } else if bt < -30.0 {
        bt.exp()
    } else {
        1.0 / (1.0 + (-bt).exp())
    }
}

/// Normalises a row of positive class scores into floored probabilities:
/// scores are scaled to sum one, clamped below at `floor`, and rescaled.
/// A row whose scores are all below `k * floor` falls back to uniform.
pub(crate) fn floored_row_probs(q: &[f64], floor: f64, out: &mut [f64]) {
    let k = q.len();
    if q.iter().all(|&v| v < k as f64 * floor) {
        out.iter_mut().for_each(|v| *v = 1.0 / k as f64);
        return;
    }
    let total: f64 = q.iter().sum();
    let mut m_sum = 0.0;
    for i in 0..k {
        out[i] = (q[i] / total).max(floor);
        m_sum += out[i];
    }
    for v in out.iter_mut() {
        *v /= m_sum;
    }
}

/// Log floored posterior of class `a` plus its gradient with respect to the
/// raw positive scores `q`, matching [`floored_row_probs`] exactly (the
/// clamp contributes zero derivative where it is active).
pub(crate) fn log_floored_prob_grad_q(q: &[f64], a: usize, floor: f64) -> (f64, Vec<f64>) {
    let k = q.len();
    if q.iter().all(|&v| v < k as f64 * floor) {
        return ((1.0 / k as f64).ln(), vec![0.0; k]);
    }
    let total: f64 = q.iter().sum();
    let p: Vec<f64> = q.iter().map(|&v| v / total).collect();
    let m: Vec<f64> = p.iter().map(|&v| v.max(floor)).collect();
    let m_sum: f64 = m.iter().sum();
    let value = (m[a] / m_sum).ln();
    // c_k = d value / d m_k gated by whether the clamp is inactive.
    let mut c = vec![0.0; k];
    for i in 0..k {
        if p[i] > floor {
            c[i] = if i == a { 1.0 / m[a] - 1.0 / m_sum } else { -1.0 / m_sum };
        }
    }
    let dot: f64 = c.iter().zip(&p).map(|(ci, pi)| ci * pi).sum();
    let grad: Vec<f64> = (0..k).map(|l| (c[l] - dot) / total).collect();
    (value, grad)
}

/// Closed-form least-squares classifier weights (`k x D`).
///
/// Solves `(Phi' Phi + lambda_c * N * I) V = Phi' 1_A` for the stacked
/// one-hot targets through a Cholesky factorisation of the Gram matrix and
/// returns `V'`.
pub fn lspc_fit(phi: &DMatrix<f64>, a: &[usize], k: usize, lambda_c: f64) -> Result<DMatrix<f64>> {
    let n = phi.nrows();
    if a.len() != n {
        return Err(Error::LengthMismatch { context: "classes vs phi", expected: n, got: a.len() });
    }
    if n == 0 {
        return Err(Error::EmptyInput("lspc_fit"));
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lspc_fit phi"));
    }
    if let Some(&bad) = a.iter().find(|&&c| c >= k) {
        return Err(Error::ClassOutOfRange { class: bad, k });
    }
    let chol = gram_cholesky(phi, lambda_c)?;
    let d = phi.ncols();
    let mut b = DMatrix::zeros(d, k);
    for (i, &cls) in a.iter().enumerate() {
        for c in 0..d {
            b[(c, cls)] += phi[(i, c)];
        }
    }
    let v = chol.solve(&b);
    Ok(v.transpose())
}

/// Cholesky of `Phi' Phi + lambda_c * N * I`.
pub(crate) fn gram_cholesky(phi: &DMatrix<f64>, lambda_c: f64) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let n = phi.nrows();
    let mut gram = phi.tr_mul(phi);
    let ridge = lambda_c * n as f64;
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    Cholesky::new(gram).ok_or(Error::SingularSystem)
}

/// A fitted least-squares probabilistic classifier.
#[derive(Debug, Clone)]
pub struct LspcModel {
    /// `k x D` weight matrix; row `a` scores class `a`.
    pub weights: DMatrix<f64>,
    pub basis: BasisSpec,
    pub beta: f64,
    pub lambda_c: f64,
}

impl LspcModel {
    /// Fits the closed form on raw conditioners (expanded internally).
    pub fn fit(
        z: &DMatrix<f64>,
        a: &[usize],
        k: usize,
        basis: BasisSpec,
        beta: f64,
        lambda_c: f64,
    ) -> Result<LspcModel> {
        let phi = basis.expand(z);
        let weights = lspc_fit(&phi, a, k, lambda_c)?;
        Ok(LspcModel { weights, basis, beta, lambda_c })
    }

    pub fn k(&self) -> usize {
        self.weights.nrows()
    }

    /// Posterior probabilities for each row of `z`: softplus-rectified class
    /// scores normalised per row, floored at [`PROB_FLOOR`], summing to one.
    pub fn posteriors(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let phi = self.basis.expand(z);
        self.posteriors_from_expanded(&phi)
    }

    pub fn posteriors_from_expanded(&self, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if phi.ncols() != self.weights.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expanded width {} != weight width {}",
                phi.ncols(),
                self.weights.ncols()
            )));
        }
        let activations = phi * self.weights.transpose();
        let k = self.k();
        let mut probs = DMatrix::zeros(phi.nrows(), k);
        let mut q = vec![0.0; k];
        let mut out = vec![0.0; k];
        for r in 0..phi.nrows() {
            for c in 0..k {
                q[c] = softplus(self.beta, activations[(r, c)]);
            }
            floored_row_probs(&q, PROB_FLOOR, &mut out);
            for c in 0..k {
                probs[(r, c)] = out[c];
            }
        }
        Ok(probs)
    }
}

/// Multinomial logistic model with class 0 as the zero-weight reference.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    /// `(k-1) x D` weights for classes `1..k`.
    pub weights: DMatrix<f64>,
    pub k: usize,
}

impl LogisticModel {
    /// Softmax probabilities (`N x k`), not floored.
    pub fn probabilities(&self, phi: &DMatrix<f64>) -> DMatrix<f64> {
        let n = phi.nrows();
        let eta = phi * self.weights.transpose(); // N x (k-1)
        let mut probs = DMatrix::zeros(n, self.k);
        for r in 0..n {
            let mut mx = 0.0_f64; // eta_0 = 0
            for c in 0..self.k - 1 {
                mx = mx.max(eta[(r, c)]);
            }
            let mut z = (-mx).exp();
            for c in 0..self.k - 1 {
                z += (eta[(r, c)] - mx).exp();
            }
            probs[(r, 0)] = (-mx).exp() / z;
            for c in 0..self.k - 1 {
                probs[(r, c + 1)] = (eta[(r, c)] - mx).exp() / z;
            }
        }
        probs
    }
}

/// Mean negative log-likelihood plus ridge (intercept column unpenalised),
/// with its gradient; shared by the fit and by callers differentiating
/// through the fit.
pub(crate) fn logistic_objective(
    w_flat: &DVector<f64>,
    phi: &DMatrix<f64>,
    a: &[usize],
    k: usize,
    lambda_c: f64,
) -> (f64, DVector<f64>) {
    let n = phi.nrows();
    let d = phi.ncols();
    let weights = DMatrix::from_fn(k - 1, d, |r, c| w_flat[r * d + c]);
    let model = LogisticModel { weights, k };
    let probs = model.probabilities(phi);
    let mut nll = 0.0;
    let mut grad = DVector::zeros((k - 1) * d);
    for i in 0..n {
        nll -= probs[(i, a[i])].max(1e-300).ln();
        for m in 1..k {
            let coef = probs[(i, m)] - f64::from(u8::from(a[i] == m));
            let base = (m - 1) * d;
            for c in 0..d {
                grad[base + c] += coef * phi[(i, c)];
            }
        }
    }
    let mut f = nll / n as f64;
    grad /= n as f64;
    for m in 0..k - 1 {
        for c in 1..d {
            let w = w_flat[m * d + c];
            f += lambda_c * w * w;
            grad[m * d + c] += 2.0 * lambda_c * w;
        }
    }
    (f, grad)
}

/// Hessian of [`logistic_objective`] at `w_flat`: per-row
/// `(diag(p) - p p') (x) phi_i phi_i' / N` over the non-reference classes,
/// plus the ridge diagonal (intercept column unpenalised). Row-major block
/// layout matching the flattened weights.
pub(crate) fn logistic_hessian(
    w_flat: &DVector<f64>,
    phi: &DMatrix<f64>,
    k: usize,
    lambda_c: f64,
) -> DMatrix<f64> {
    let n = phi.nrows();
    let d = phi.ncols();
    let weights = DMatrix::from_fn(k - 1, d, |r, c| w_flat[r * d + c]);
    let model = LogisticModel { weights, k };
    let probs = model.probabilities(phi);
    let dim = (k - 1) * d;
    let mut hess: DMatrix<f64> = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for m in 1..k {
            for l in 1..k {
                let coef =
                    probs[(i, m)] * (f64::from(u8::from(m == l)) - probs[(i, l)]) / n as f64;
                if coef == 0.0 {
                    continue;
                }
                let bm = (m - 1) * d;
                let bl = (l - 1) * d;
                for c in 0..d {
                    let pc = coef * phi[(i, c)];
                    for e in 0..d {
                        hess[(bm + c, bl + e)] += pc * phi[(i, e)];
                    }
                }
            }
        }
    }
    for m in 0..k - 1 {
        for c in 1..d {
            hess[(m * d + c, m * d + c)] += 2.0 * lambda_c;
        }
    }
    hess
}

/// Fits the ridge-penalised multinomial logistic classifier by quasi-Newton
/// descent from zero weights, requiring the gradient infinity norm to reach
/// [`LOGISTIC_GRAD_TOL`]. The solver aims two decades tighter than the
/// requirement — callers differentiating through this fit treat the result
/// as an exact stationary point — and finishes with damped Newton steps,
/// which land on the stationary point even where the line search stalls in
/// value noise.
pub fn logistic_fit(phi: &DMatrix<f64>, a: &[usize], k: usize, lambda_c: f64) -> Result<LogisticModel> {
    logistic_fit_aiming(phi, a, k, lambda_c, 0.01 * LOGISTIC_GRAD_TOL, LOGISTIC_GRAD_TOL)
}

/// Fit accepting exactly `grad_tol` (no extra polish); for backends whose
/// posteriors are consumed as values only, where estimator noise dwarfs the
/// last optimisation decades.
pub(crate) fn logistic_fit_tol(
    phi: &DMatrix<f64>,
    a: &[usize],
    k: usize,
    lambda_c: f64,
    grad_tol: f64,
) -> Result<LogisticModel> {
    logistic_fit_aiming(phi, a, k, lambda_c, grad_tol, grad_tol)
}

fn logistic_fit_aiming(
    phi: &DMatrix<f64>,
    a: &[usize],
    k: usize,
    lambda_c: f64,
    aim_tol: f64,
    accept_tol: f64,
) -> Result<LogisticModel> {
    let n = phi.nrows();
    if a.len() != n {
        return Err(Error::LengthMismatch { context: "classes vs phi", expected: n, got: a.len() });
    }
    if n == 0 {
        return Err(Error::EmptyInput("logistic_fit"));
    }
    if let Some(&bad) = a.iter().find(|&&c| c >= k) {
        return Err(Error::ClassOutOfRange { class: bad, k });
    }
    let d = phi.ncols();
    let params = LbfgsParams { max_iter: LOGISTIC_MAX_ITER, grad_tol: aim_tol, ..LbfgsParams::default() };
    let res = optim::minimize(
        |w| logistic_objective(w, phi, a, k, lambda_c),
        DVector::zeros((k - 1) * d),
        &params,
    )?;
    // The returned point is the best seen, which may be tighter than the
    // final iterate; judge progress on its own gradient.
    let mut x = res.x;
    let (mut f, mut g) = logistic_objective(&x, phi, a, k, lambda_c);
    // Damped Newton polish: the problem is convex and low-dimensional, so a
    // couple of exact steps reach the stationary point even when the line
    // search above stalls in value noise slightly short of `aim_tol`.
    let mut polish = 0usize;
    while g.amax() > aim_tol && polish < 8 {
        let hess = logistic_hessian(&x, phi, k, lambda_c);
        let step = match nalgebra::Cholesky::new(hess.clone()) {
            Some(ch) => ch.solve(&g),
            None => match hess.full_piv_lu().solve(&g) {
                Some(s) => s,
                None => break,
            },
        };
        let mut improved = false;
        let mut t = 1.0;
        for _ in 0..30 {
            let cand = &x - &step * t;
            let (fc, gc) = logistic_objective(&cand, phi, a, k, lambda_c);
            if fc.is_finite() && (fc < f || gc.amax() < g.amax()) {
                x = cand;
                f = fc;
                g = gc;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
        polish += 1;
    }
    let grad_norm = g.amax();
    if grad_norm > accept_tol {
        return Err(Error::InnerOptim { iterations: res.iterations + polish, grad_norm });
    }
    let weights = DMatrix::from_fn(k - 1, d, |r, c| x[r * d + c]);
    Ok(LogisticModel { weights, k })
}

/// Fits the nested logistic classifier on basis-expanded conditioners and
/// returns its (floored) probabilities on the same rows.
pub fn fit_predict_logistic(
    z: &DMatrix<f64>,
    a: &[usize],
    k: usize,
    lambda_c: f64,
    basis: BasisSpec,
) -> Result<DMatrix<f64>> {
    let phi = basis.expand(z);
    let model = logistic_fit(&phi, a, k, lambda_c)?;
    let raw = model.probabilities(&phi);
    Ok(floor_probability_rows(&raw))
}

/// Applies the same floor-and-renormalise step as the least-squares
/// posteriors to an already row-stochastic matrix.
pub fn floor_probability_rows(probs: &DMatrix<f64>) -> DMatrix<f64> {
    let k = probs.ncols();
    let mut out = probs.clone();
    let mut q = vec![0.0; k];
    let mut row = vec![0.0; k];
    for r in 0..probs.nrows() {
        for c in 0..k {
            q[c] = probs[(r, c)];
        }
        floored_row_probs(&q, PROB_FLOOR, &mut row);
        for c in 0..k {
            out[(r, c)] = row[c];
        }
    }
    out
}
