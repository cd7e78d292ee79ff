//! Independent numerical oracles for the acceptance suite: adaptive
//! quadrature over one-dimensional two-class Gaussian mixtures (for
//! checking the Monte-Carlo oracle) and a closed-form ridge solve written
//! against nalgebra's LU factorisation rather than the library's solvers.
#![allow(dead_code)]

use fairreg::data::Scenario;
use nalgebra::{DMatrix, DVector};

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
}

// ---------------------------------------------------------------------------
// Closed-form ridge oracle, deliberately via LU rather than Cholesky.

/// Minimiser of `(1/N) ||y - [X 1] theta||^2 + lambda_w ||theta_w||^2`
/// (intercept unpenalised), solved with full-pivot LU on the normal
/// equations.
pub fn ridge_oracle_lu(x: &DMatrix<f64>, y: &DVector<f64>, lambda_w: f64) -> DVector<f64> {
    let n = x.nrows();
    let p = x.ncols();
    let mut z = DMatrix::from_element(n, p + 1, 1.0);
    z.view_mut((0, 0), (n, p)).copy_from(x);
    let mut lhs = z.transpose() * &z;
    for j in 0..p {
        lhs[(j, j)] += n as f64 * lambda_w;
    }
    let rhs = z.transpose() * y;
    lhs.full_piv_lu().solve(&rhs).expect("ridge normal equations solvable")
}

/// Largest absolute entry of the difference between two vectors.
pub fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}
