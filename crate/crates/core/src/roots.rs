//! Bracketed scalar root finding.

use crate::error::{Error, Result};

/// Plain bisection for a continuous `g` with a sign change on `[a, b]`.
/// Returns the midpoint once the bracket is narrower than `xtol`.
pub fn bisect(mut g: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, xtol: f64) -> f64 {
    let mut ga = g(a);
    if ga == 0.0 {
        return a;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= xtol || m == a || m == b {
            return m;
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    pub xtol: f64,
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions { xtol: 1e-15, ftol: 0.0, max_iter: 200 }
    }
}

/// Safeguarded secant iteration on a bracket `[a, b]` with `g(a)`, `g(b)` of
/// opposite sign. Each step takes the secant point when it falls well inside
/// the bracket and the bracket has been shrinking fast enough, and bisects
/// otherwise. Stops when `|g| <= ftol` or the bracket is below `xtol`
/// (relative to the magnitude of the endpoints).
pub fn solve_bracketed(
    mut g: impl FnMut(f64) -> Result<f64>,
    a: f64,
    b: f64,
    opts: RootOptions,
) -> Result<f64> {
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut ga = g(a)?;
    let mut gb = g(b)?;
    if ga == 0.0 {
        return Ok(a);
    }
    if gb == 0.0 {
        return Ok(b);
    }
    if (ga < 0.0) == (gb < 0.0) {
        return Err(Error::NoSignChange { a, b, fa: ga, fb: gb });
    }
    let mut last_width = b - a;
    let mut best = if ga.abs() < gb.abs() { (a, ga) } else { (b, gb) };
    for _ in 0..opts.max_iter {
        let width = b - a;
        let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        if width <= opts.xtol * scale.max(1e-300) || best.1.abs() <= opts.ftol {
            return Ok(best.0);
        }
        let secant = b - gb * (b - a) / (gb - ga);
        let margin = 0.05 * width;
        let use_secant = secant.is_finite()
            && secant > a + margin
            && secant < b - margin
            && width < 0.7 * last_width;
        let x = if use_secant { secant } else { 0.5 * (a + b) };
        last_width = width;
        if x <= a || x >= b {
            return Ok(best.0);
        }
        let gx = g(x)?;
        if gx.abs() < best.1.abs() {
            best = (x, gx);
        }
        if gx == 0.0 {
            return Ok(x);
        }
        if (gx < 0.0) == (ga < 0.0) {
            a = x;
            ga = gx;
        } else {
            b = x;
            gb = gx;
        }
    }
    Ok(best.0)
}

/// Finds a root of `g` (increasing in `t`) on `t` ranging over the open
/// interval `(lo, hi)` by expanding a bracket outward from `start` in
/// geometric steps of `step`, stopping at the first sign change.
pub fn bracket_expanding(
    mut g: impl FnMut(f64) -> Result<f64>,
    start: f64,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<(f64, f64, f64, f64)> {
    let mut t = start;
    let mut gt = g(t)?;
    let mut s = step;
    if gt == 0.0 {
        return Ok((t, t, gt, gt));
    }
    loop {
        let dir = if gt < 0.0 { 1.0 } else { -1.0 };
        let next = if dir > 0.0 { (t + s).min(hi) } else { (t - s).max(lo) };
        if next == t {
            return Err(Error::NoRoot(format!(
                "no sign change found between {lo} and {hi} (value {gt:e} at {t})"
            )));
        }
        let gn = g(next)?;
        if gn == 0.0 || (gn < 0.0) != (gt < 0.0) {
            return Ok(if t < next { (t, next, gt, gn) } else { (next, t, gn, gt) });
        }
        t = next;
        gt = gn;
        s *= 2.0;
    }
}
