//! Box-constrained limited-memory quasi-Newton minimizer.
//!
//! Projected L-BFGS: the two-loop recursion runs on the free variables only
//! (variables pinned at a bound with the gradient pushing outward are held
//! fixed), steps are projected back into the box, and an Armijo backtracking
//! search along the projection arc guarantees descent.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    /// Stop when the sup-norm of the projected gradient falls below this.
    pub pgtol: f64,
    /// Stop when `|f_k − f_{k+1}| ≤ ftol · max(|f_k|, |f_{k+1}|, 1)`; 0
    /// disables the test.
    pub ftol: f64,
    pub max_iter: usize,
    /// Number of correction pairs kept.
    pub memory: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            pgtol: 1e-5,
            ftol: 1e-8,
            max_iter: 1000,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    GradientTolerance,
    FunctionTolerance,
    MaxIterations,
    LineSearchFailed,
    /// The objective was not finite at the starting point.
    NonFiniteStart,
}

impl Status {
    pub fn is_success(self) -> bool {
        matches!(self, Status::GradientTolerance | Status::FunctionTolerance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub gradient: Vec<f64>,
    /// Sup-norm of the projected gradient at `x`.
    pub pg_norm: f64,
    pub iterations: usize,
    pub status: Status,
}

/// Relative size of rounding noise tolerated in objective values.
const NOISE: f64 = 1e-13;

fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// Sup-norm of `x − P(x − g)`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&lo, &hi))| (xi - clamp(xi - gi, lo, hi)).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `objective` over the box `[lower, upper]` starting from `x0`
/// (clipped into the box first).
///
/// `objective(x, grad)` returns `f(x)` and writes `∇f(x)` into `grad`.
/// Non-finite values are treated as `+∞` and rejected by the line search.
pub fn minimize<F>(
    mut objective: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &OptimOptions,
) -> OptimResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    debug_assert!(lower.len() == n && upper.len() == n);
    let mut x: Vec<f64> = x0
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&v, (&lo, &hi))| clamp(v, lo, hi))
        .collect();
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return OptimResult {
            pg_norm: f64::INFINITY,
            x,
            f: f64::INFINITY,
            gradient: g,
            iterations: 0,
            status: Status::NonFiniteStart,
        };
    }

    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut free = vec![true; n];
    let mut alpha_buf = vec![0.0; opts.memory];

    let mut status = Status::MaxIterations;
    let mut iter = 0;
    while iter < opts.max_iter {
        let pg = projected_gradient_norm(&x, &g, lower, upper);
        if pg < opts.pgtol {
            status = Status::GradientTolerance;
            break;
        }

        for i in 0..n {
            let at_lo = x[i] <= lower[i] && g[i] > 0.0;
            let at_hi = x[i] >= upper[i] && g[i] < 0.0;
            free[i] = !(at_lo || at_hi) && lower[i] < upper[i];
        }

        // two-loop recursion on the free subspace
        for i in 0..n {
            d[i] = if free[i] { -g[i] } else { 0.0 };
        }
        let masked = |v: &[f64], w: &[f64], free: &[bool]| -> f64 {
            v.iter()
                .zip(w)
                .zip(free)
                .filter(|(_, &f)| f)
                .map(|((a, b), _)| a * b)
                .sum()
        };
        for (k, (s, y, rho)) in memory.iter().enumerate().rev() {
            let a = rho * masked(s, &d, &free);
            alpha_buf[k] = a;
            for i in 0..n {
                if free[i] {
                    d[i] -= a * y[i];
                }
            }
        }
        if let Some((s, y, _)) = memory.back() {
            let yy = masked(y, y, &free);
            let sy = masked(s, y, &free);
            if yy > 0.0 && sy > 0.0 {
                let gamma = sy / yy;
                for v in d.iter_mut() {
                    *v *= gamma;
                }
            }
        }
        for (k, (s, y, rho)) in memory.iter().enumerate() {
            let b = rho * masked(y, &d, &free);
            for i in 0..n {
                if free[i] {
                    d[i] += s[i] * (alpha_buf[k] - b);
                }
            }
        }

        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            memory.clear();
            for i in 0..n {
                d[i] = if free[i] { -g[i] } else { 0.0 };
            }
            slope = dot(&d, &g);
            if !(slope < 0.0) {
                status = Status::GradientTolerance;
                break;
            }
        }

        // first step: scale steepest descent to a unit move
        let mut step = if memory.is_empty() {
            let dn = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if dn > 1.0 {
                1.0 / dn
            } else {
                1.0
            }
        } else {
            1.0
        };

        let mut accepted = false;
        let mut f_trial = f64::INFINITY;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = clamp(x[i] + step * d[i], lower[i], upper[i]);
            }
            f_trial = objective(&x_new, &mut g_new);
            let decrease: f64 = x_new
                .iter()
                .zip(&x)
                .zip(&g)
                .map(|((xn, xo), gi)| gi * (xn - xo))
                .sum();
            if f_trial.is_finite() && g_new.iter().all(|v| v.is_finite()) {
                if f_trial <= f + 1e-4 * decrease.min(0.0) {
                    accepted = true;
                    break;
                }
                // near the optimum f differences drown in rounding; fall
                // back to the directional derivative (approximate Wolfe)
                let slope_new: f64 = x_new
                    .iter()
                    .zip(&x)
                    .zip(&g_new)
                    .map(|((xn, xo), gi)| gi * (xn - xo))
                    .sum();
                if decrease < 0.0
                    && f_trial <= f + NOISE * f.abs()
                    && slope_new >= 0.9 * decrease
                    && slope_new <= -0.8 * decrease
                {
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        iter += 1;
        if !accepted {
            status = Status::LineSearchFailed;
            break;
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }

        let f_old = f;
        core::mem::swap(&mut x, &mut x_new);
        core::mem::swap(&mut g, &mut g_new);
        f = f_trial;

        let scale = f_old.abs().max(f.abs()).max(1.0);
        if opts.ftol > 0.0 && (f_old - f).abs() <= opts.ftol * scale {
            status = Status::FunctionTolerance;
            break;
        }
    }

    let pg_norm = projected_gradient_norm(&x, &g, lower, upper);
    if pg_norm < opts.pgtol {
        status = Status::GradientTolerance;
    }
    OptimResult {
        x,
        f,
        gradient: g,
        pg_norm,
        iterations: iter,
        status,
    }
}

/// `√(Σ vᵢ²)`.
pub fn norm2(v: &[f64]) -> f64 {
    math::sqrt(dot(v, v))
}
