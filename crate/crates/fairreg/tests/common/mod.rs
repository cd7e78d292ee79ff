//! Oracles shared by the integration suites: adaptive quadrature over
//! one-dimensional two-class Gaussian mixtures, the analytic Bayes
//! posterior, central finite differences and a two-sample
//! Kolmogorov-Smirnov statistic. Everything here is written independently
//! of the library internals so the suites can cross-examine them.
#![allow(dead_code)]

use fairreg::data::Scenario;
use nalgebra::DVector;

// ---------------------------------------------------------------------------
// Adaptive Simpson quadrature.

fn simpson_panel(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (left, lm, flm) = simpson_panel(f, a, fa, m, fm);
    let (right, rm, frm) = simpson_panel(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
            + simpson_recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance
/// `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson_panel(f, a, fa, b, fb);
    simpson_recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

// ---------------------------------------------------------------------------
// One-dimensional two-class Gaussian mixture with every density known.

const QUAD_TOL: f64 = 1e-10;

/// `Z | A=a ~ Normal(mean[a], var[a])`, `P(A=1) = prior[1]`.
#[derive(Debug, Clone)]
pub struct Mixture1d {
    pub prior: [f64; 2],
    pub mean: [f64; 2],
    pub var: [f64; 2],
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-(d * d) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

impl Mixture1d {
    /// The marginal law of a scenario's score component `S`.
    pub fn score_marginal_of(sc: &Scenario) -> Mixture1d {
        Mixture1d {
            prior: [1.0 - sc.p, sc.p],
            mean: [sc.mean0[1], sc.mean1[1]],
            var: [sc.cov0[1][1], sc.cov1[1][1]],
        }
    }

    pub fn class_density(&self, a: usize, z: f64) -> f64 {
        normal_pdf(z, self.mean[a], self.var[a])
    }

    pub fn marginal(&self, z: f64) -> f64 {
        self.prior[0] * self.class_density(0, z) + self.prior[1] * self.class_density(1, z)
    }

    /// Exact posterior `P(A = a | Z = z)`.
    pub fn posterior(&self, a: usize, z: f64) -> f64 {
        self.prior[a] * self.class_density(a, z) / self.marginal(z)
    }

    /// Entropy of the class prior in nats.
    pub fn prior_entropy(&self) -> f64 {
        -self.prior.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    fn support(&self) -> (f64, f64) {
        let sd = self.var[0].sqrt().max(self.var[1].sqrt());
        (
            self.mean[0].min(self.mean[1]) - 12.0 * sd,
            self.mean[0].max(self.mean[1]) + 12.0 * sd,
        )
    }

    /// `MI(Z; A)` in nats by quadrature:
    /// `sum_a prior_a * ∫ p(z|a) ln(p(z|a) / p(z)) dz`.
    pub fn quad_mi(&self) -> f64 {
        let (lo, hi) = self.support();
        let mut mi = 0.0;
        for a in 0..2 {
            let f = |z: f64| {
                let pz_a = self.class_density(a, z);
                if pz_a <= 0.0 {
                    return 0.0;
                }
                pz_a * (pz_a / self.marginal(z)).ln()
            };
            mi += self.prior[a] * adaptive_simpson(&f, lo, hi, QUAD_TOL);
        }
        mi
    }

    /// `H(A | Z)` in nats by quadrature:
    /// `-∫ p(z) * sum_a p(a|z) ln p(a|z) dz`.
    pub fn quad_cond_entropy(&self) -> f64 {
        let (lo, hi) = self.support();
        let f = |z: f64| {
            let pz = self.marginal(z);
            let mut inner = 0.0;
            for a in 0..2 {
                let post = self.posterior(a, z);
                if post > 0.0 {
                    inner -= post * post.ln();
                }
            }
            pz * inner
        };
        adaptive_simpson(&f, lo, hi, QUAD_TOL)
    }
}

// ---------------------------------------------------------------------------
// Finite differences.

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F: FnMut(&DVector<f64>) -> f64>(
    mut f: F,
    x: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[i] += h;
        minus[i] -= h;
        g[i] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    g
}

/// Richardson-extrapolated central differences: cancels the O(h^2)
/// truncation term, leaving O(h^4) truncation plus the value-noise floor.
/// Useful when the objective contains an inner iterative fit whose stopping
/// point jitters the value by more than machine epsilon.
pub fn fd_gradient_richardson<F: FnMut(&DVector<f64>) -> f64>(
    mut f: F,
    x: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let coarse = fd_gradient(&mut f, x, h);
    let fine = fd_gradient(&mut f, x, 0.5 * h);
    (fine * 4.0 - coarse) / 3.0
}

/// Relative infinity-norm error of `got` against `want`.
pub fn rel_inf_err(got: &DVector<f64>, want: &DVector<f64>) -> f64 {
    let scale = want.amax().max(1e-12);
    (got - want).amax() / scale
}

// ---------------------------------------------------------------------------
// Two-sample Kolmogorov-Smirnov statistic.

/// Maximum absolute difference between the empirical CDFs of two samples.
pub fn ks_statistic(xs: &[f64], ys: &[f64]) -> f64 {
    assert!(!xs.is_empty() && !ys.is_empty(), "KS needs non-empty samples");
    let mut xs = xs.to_vec();
    let mut ys = ys.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut ks: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        ks = ks.max((i as f64 / nx - j as f64 / ny).abs());
    }
    ks
}
