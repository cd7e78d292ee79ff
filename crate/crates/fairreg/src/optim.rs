//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The search direction comes from the standard two-loop recursion over the
//! last `history` curvature pairs; the step length satisfies the strong
//! Wolfe conditions (sufficient decrease + curvature) found by cubic
//! interpolation inside a bracket/zoom loop. A failed line search is not an
//! error: the solver stops and reports the best iterate seen so far with
//! `converged = false`.

use crate::error::{Error, Result};
use nalgebra::DVector;
use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct LbfgsParams {
    pub max_iter: usize,
    /// Convergence threshold on the infinity norm of the gradient.
    pub grad_tol: f64,
    /// Number of curvature pairs kept for the two-loop recursion.
    pub history: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Maximum objective evaluations per line search.
    pub max_line_search: usize,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        LbfgsParams {
            max_iter: 500,
            grad_tol: 1e-6,
            history: 10,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Gradient infinity norm fell below `grad_tol`.
    GradTol,
    /// Iteration budget exhausted.
    MaxIter,
    /// Line search could not find a strong-Wolfe step.
    LineSearchFailed,
    /// Step or objective change shrank below floating-point resolution.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    /// Best (lowest-objective) point evaluated.
    pub x: DVector<f64>,
    pub f: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Objective value at the start and after every accepted iterate.
    pub trace: Vec<f64>,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Minimiser of the cubic through (x1, f1, g1) and (x2, f2, g2), clamped to
/// `bounds`; falls back to bisection when the cubic has no interior minimum.
fn cubic_interpolate(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64, bounds: (f64, f64)) -> f64 {
    let (lo, hi) = bounds;
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_square = d1 * d1 - g1 * g2;
    if d2_square >= 0.0 {
        let d2 = d2_square.sqrt();
        let min_pos = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if min_pos.is_finite() {
            return min_pos.clamp(lo, hi);
        }
    }
    0.5 * (lo + hi)
}

struct LineSearchOutcome {
    step: f64,
    f: f64,
    grad: DVector<f64>,
    success: bool,
}

/// The search origin: objective value and directional derivative at step 0,
/// plus the initial trial step.
struct SearchStart {
    f: f64,
    gtd: f64,
    t_init: f64,
}

/// A step interval known to contain a strong-Wolfe point: steps, values,
/// gradients (cloned lazily) and directional derivatives at both ends.
struct Bracket {
    t: [f64; 2],
    f: [f64; 2],
    g: [Option<DVector<f64>>; 2],
    gtd: [f64; 2],
}

/// Strong-Wolfe line search along `dir` from `x` (bracket phase followed by
/// zoom), after the scheme used by classic L-BFGS implementations.
fn strong_wolfe<F>(
    obj: &mut F,
    x: &DVector<f64>,
    dir: &DVector<f64>,
    start: SearchStart,
    params: &LbfgsParams,
    best: &mut (f64, DVector<f64>),
) -> LineSearchOutcome
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let SearchStart { f: f0, gtd: gtd0, t_init } = start;
    let c1 = params.c1;
    let c2 = params.c2;
    let mut evals = 0usize;
    let mut eval_at = |t: f64, evals: &mut usize, best: &mut (f64, DVector<f64>)| {
        let xt = x + dir * t;
        let (f, g) = obj(&xt);
        *evals += 1;
        if f.is_finite() && f < best.0 {
            *best = (f, xt);
        }
        let gtd = g.dot(dir);
        (f, g, gtd)
    };

    let mut t = t_init;
    let (mut f_new, mut g_new, mut gtd_new) = eval_at(t, &mut evals, best);
    let mut t_prev = 0.0;
    let mut f_prev = f0;
    let mut g_prev: Option<DVector<f64>> = None;
    let mut gtd_prev = gtd0;

    // Bracket phase: extrapolate until the minimiser is contained.
    let mut bracket: Option<Bracket>;
    loop {
        let armijo_fail = !f_new.is_finite() || f_new > f0 + c1 * t * gtd0 || (evals > 1 && f_new >= f_prev);
        if armijo_fail {
            bracket = Some(Bracket {
                t: [t_prev, t],
                f: [f_prev, f_new],
                g: [g_prev.take(), Some(g_new.clone())],
                gtd: [gtd_prev, gtd_new],
            });
            break;
        }
        if gtd_new.abs() <= -c2 * gtd0 {
            return LineSearchOutcome { step: t, f: f_new, grad: g_new, success: true };
        }
        if gtd_new >= 0.0 {
            bracket = Some(Bracket {
                t: [t, t_prev],
                f: [f_new, f_prev],
                g: [Some(g_new.clone()), g_prev.take()],
                gtd: [gtd_new, gtd_prev],
            });
            break;
        }
        if evals >= params.max_line_search {
            return LineSearchOutcome { step: t, f: f_new, grad: g_new, success: false };
        }
        // Extrapolate beyond t.
        let min_step = t + 0.01 * (t - t_prev);
        let max_step = t * 10.0;
        let t_next = cubic_interpolate(t_prev, f_prev, gtd_prev, t, f_new, gtd_new, (min_step, max_step));
        t_prev = t;
        f_prev = f_new;
        gtd_prev = gtd_new;
        g_prev = Some(g_new.clone());
        t = t_next;
        let e = eval_at(t, &mut evals, best);
        f_new = e.0;
        g_new = e.1;
        gtd_new = e.2;
    }

    // Zoom phase: shrink the bracket until strong Wolfe holds.
    let Bracket { t: mut ts, f: mut fs, g: mut gs, gtd: mut gtds } = bracket.take().unwrap();
    let mut insufficient_progress = false;
    while evals < params.max_line_search {
        let (lo_i, hi_i) = if fs[0] <= fs[1] { (0, 1) } else { (1, 0) };
        if !fs[lo_i].is_finite() || (ts[1] - ts[0]).abs() * gtd0.abs() < 1e-18 {
            break;
        }
        let mut t_zoom = cubic_interpolate(
            ts[0],
            fs[0],
            gtds[0],
            ts[1],
            fs[1],
            gtds[1],
            (ts[0].min(ts[1]), ts[0].max(ts[1])),
        );
        // Guard against stalling at the bracket edge.
        let lo_b = ts[0].min(ts[1]);
        let hi_b = ts[0].max(ts[1]);
        let eps = 0.1 * (hi_b - lo_b);
        if (hi_b - t_zoom).min(t_zoom - lo_b) < eps {
            if insufficient_progress || t_zoom >= hi_b || t_zoom <= lo_b {
                t_zoom = if (t_zoom - hi_b).abs() < (t_zoom - lo_b).abs() { hi_b - eps } else { lo_b + eps };
                insufficient_progress = false;
            } else {
                insufficient_progress = true;
            }
        } else {
            insufficient_progress = false;
        }
        let (f_z, g_z, gtd_z) = eval_at(t_zoom, &mut evals, best);
        if !f_z.is_finite() || f_z > f0 + c1 * t_zoom * gtd0 || f_z >= fs[lo_i] {
            ts[hi_i] = t_zoom;
            fs[hi_i] = f_z;
            gs[hi_i] = Some(g_z);
            gtds[hi_i] = gtd_z;
        } else {
            if gtd_z.abs() <= -c2 * gtd0 {
                return LineSearchOutcome { step: t_zoom, f: f_z, grad: g_z, success: true };
            }
            if gtd_z * (ts[hi_i] - ts[lo_i]) >= 0.0 {
                ts[hi_i] = ts[lo_i];
                fs[hi_i] = fs[lo_i];
                gs[hi_i] = gs[lo_i].take();
                gtds[hi_i] = gtds[lo_i];
            }
            ts[lo_i] = t_zoom;
            fs[lo_i] = f_z;
            gs[lo_i] = Some(g_z);
            gtds[lo_i] = gtd_z;
        }
    }

    // Ran out of evaluations: report the lower bracket end without claiming
    // the Wolfe conditions hold.
    let lo_i = if fs[0] <= fs[1] { 0 } else { 1 };
    match gs[lo_i].take() {
        Some(g) if fs[lo_i].is_finite() && ts[lo_i] > 0.0 => LineSearchOutcome {
            step: ts[lo_i],
            f: fs[lo_i],
            grad: g,
            success: false,
        },
        _ => LineSearchOutcome { step: 0.0, f: f0, grad: DVector::zeros(x.len()), success: false },
    }
}

/// Minimise `obj` (value and gradient) starting from `x0`.
///
/// Returns an error only when the objective is non-finite at the starting
/// point; a failed line search ends the run with `converged = false`.
pub fn minimize<F>(mut obj: F, x0: DVector<f64>, params: &LbfgsParams) -> Result<LbfgsResult>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let (f0, g0) = obj(&x0);
    if !f0.is_finite() || g0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss);
    }
    let mut x = x0.clone();
    let mut f = f0;
    let mut g = g0;
    let mut best = (f, x.clone());
    let mut trace = vec![f];
    // (s, y, 1/s'y) pairs, most recent last.
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut iterations = 0usize;
    let mut termination = Termination::MaxIter;
    let mut converged = false;

    for iter in 0..params.max_iter {
        if inf_norm(&g) <= params.grad_tol {
            converged = true;
            termination = Termination::GradTol;
            break;
        }
        iterations = iter + 1;

        // Two-loop recursion for the quasi-Newton direction.
        let mut q = -&g;
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = s.dot(y) / y.dot(y);
            q *= gamma;
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        let mut dir = q;
        let mut gtd = g.dot(&dir);
        if gtd >= 0.0 {
            // Stale curvature produced an ascent direction; restart from
            // steepest descent.
            pairs.clear();
            dir = -&g;
            gtd = g.dot(&dir);
        }

        let t_init = if pairs.is_empty() { (1.0 / inf_norm(&g)).min(1.0) } else { 1.0 };
        let start = SearchStart { f, gtd, t_init };
        let ls = strong_wolfe(&mut obj, &x, &dir, start, params, &mut best);
        if !ls.success || ls.step <= 0.0 {
            termination = Termination::LineSearchFailed;
            break;
        }

        let s = &dir * ls.step;
        let y = &ls.grad - &g;
        let sty = s.dot(&y);
        if sty > 1e-12 * s.norm() * y.norm() {
            if pairs.len() == params.history {
                pairs.pop_front();
            }
            let rho = 1.0 / sty;
            pairs.push_back((s.clone(), y, rho));
        }

        let f_prev = f;
        x += s;
        f = ls.f;
        g = ls.grad;
        trace.push(f);
        if f < best.0 {
            best = (f, x.clone());
        }
        if (f_prev - f).abs() <= 1e-15 * f.abs().max(1.0) {
            termination = Termination::Stalled;
            break;
        }
    }

    if !converged && inf_norm(&g) <= params.grad_tol {
        converged = true;
        termination = Termination::GradTol;
    }
    let grad_inf_norm = inf_norm(&g);
    let (bf, bx) = best;
    Ok(LbfgsResult {
        x: if bf < f { bx } else { x },
        f: bf.min(f),
        grad_inf_norm,
        iterations,
        converged,
        termination,
        trace,
    })
}
