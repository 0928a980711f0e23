//! Quasi-Newton minimizer used for the likelihood surface: BFGS with
//! central-difference gradients and Armijo backtracking.

use nalgebra::{DMatrix, DVector};

const GRAD_STEP: f64 = 1e-5;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
const GRAD_NORM_TOL: f64 = 1e-6;

pub(crate) struct OptimResult {
    pub(crate) x: Vec<f64>,
    pub(crate) f: f64,
    pub(crate) converged: bool,
    pub(crate) iterations: usize,
}

fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], fx: f64) -> DVector<f64> {
    let n = x.len();
    let mut g = DVector::zeros(n);
    let mut xp = x.to_vec();
    for i in 0..n {
        let h = GRAD_STEP * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = if fp.is_finite() && fm.is_finite() {
            (fp - fm) / (2.0 * h)
        } else if fp.is_finite() {
            (fp - fx) / h
        } else if fm.is_finite() {
            (fx - fm) / h
        } else {
            0.0
        };
    }
    g
}

/// Minimizes `f` from `x0`. Convergence: objective change below `tol`
/// relative to its magnitude, or a small gradient. Always returns the best
/// point seen.
pub(crate) fn minimize<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    max_iter: usize,
    tol: f64,
) -> OptimResult {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    if n == 0 || !fx.is_finite() {
        return OptimResult { x: x0.to_vec(), f: fx, converged: n == 0, iterations: 0 };
    }

    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut g = gradient(&f, x.as_slice(), fx);

    for iter in 1..=max_iter {
        if g.norm() < GRAD_NORM_TOL {
            return OptimResult { x: x.as_slice().to_vec(), f: fx, converged: true, iterations: iter };
        }
        let mut dir = -(&h_inv * &g);
        let mut slope = dir.dot(&g);
        if slope.is_nan() || slope >= 0.0 {
            // Stale curvature estimate; fall back to steepest descent.
            h_inv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = dir.dot(&g);
            if slope.is_nan() || slope >= 0.0 {
                return OptimResult {
                    x: x.as_slice().to_vec(),
                    f: fx,
                    converged: true,
                    iterations: iter,
                };
            }
        }

        let mut step = 1.0;
        let mut x_new = &x + &dir * step;
        let mut f_new = f(x_new.as_slice());
        let mut backtracks = 0;
        while !(f_new.is_finite() && f_new <= fx + ARMIJO_C1 * step * slope) {
            step *= 0.5;
            backtracks += 1;
            if backtracks > MAX_BACKTRACKS {
                break;
            }
            x_new = &x + &dir * step;
            f_new = f(x_new.as_slice());
        }
        if backtracks > MAX_BACKTRACKS || !f_new.is_finite() {
            // No descent step found; the current point is as good as the
            // line search can certify.
            return OptimResult { x: x.as_slice().to_vec(), f: fx, converged: true, iterations: iter };
        }

        let g_new = gradient(&f, x_new.as_slice(), f_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let i_mat = DMatrix::identity(n, n);
            let left = &i_mat - &s * y.transpose() * rho;
            let right = &i_mat - &y * s.transpose() * rho;
            h_inv = &left * h_inv * &right + &s * s.transpose() * rho;
        }

        let f_drop = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        if f_drop.abs() <= tol * fx.abs().max(1.0) {
            return OptimResult { x: x.as_slice().to_vec(), f: fx, converged: true, iterations: iter };
        }
    }
    OptimResult { x: x.as_slice().to_vec(), f: fx, converged: false, iterations: max_iter }
}
