//! Bracketed scalar root finding: secant steps guarded by bisection.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// Stop once `|f(x)|` falls below this.
    pub f_tol: f64,
    /// Stop once the bracket is narrower than this.
    pub x_tol: f64,
    pub max_iterations: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            f_tol: 1e-12,
            x_tol: 1e-13,
            max_iterations: 200,
        }
    }
}

/// Root of `f` on `[lo, hi]`, which must bracket a sign change.
pub fn find_root<F>(f: F, lo: f64, hi: f64, opts: RootOptions, function: &'static str) -> Result<Root>
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(Root { x: a, residual: 0.0, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, residual: 0.0, iterations: 0 });
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::NumericBracket { function, lo, hi, f_lo: fa, f_hi: fb });
    }
    let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    let mut force_bisect = false;
    for it in 1..=opts.max_iterations {
        let width = b - a;
        let secant = b - fb * (b - a) / (fb - fa);
        let x = if !force_bisect && secant > a && secant < b {
            secant
        } else {
            0.5 * (a + b)
        };
        let fx = f(x);
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx == 0.0 || fx.abs() <= opts.f_tol {
            return Ok(Root { x, residual: fx, iterations: it });
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        // A secant step that failed to halve the bracket is followed by bisection.
        force_bisect = !force_bisect && b - a > 0.5 * width;
        if (b - a) <= opts.x_tol * (1.0 + a.abs().max(b.abs())) {
            return Ok(Root { x: best.0, residual: best.1, iterations: it });
        }
    }
    Ok(Root { x: best.0, residual: best.1, iterations: opts.max_iterations })
}

/// Subintervals of an even grid on `[lo, hi]` across which `f` changes sign.
pub fn sign_changes<F>(f: F, lo: f64, hi: f64, cells: usize) -> Vec<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let cells = cells.max(1);
    let step = (hi - lo) / cells as f64;
    let mut out = Vec::new();
    let mut x0 = lo;
    let mut f0 = f(lo);
    for i in 1..=cells {
        let x1 = if i == cells { hi } else { lo + step * i as f64 };
        let f1 = f(x1);
        if f0 == 0.0 || (f0 < 0.0) != (f1 < 0.0) && f1 != 0.0 {
            out.push((x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    out
}
