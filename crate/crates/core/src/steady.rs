//! Monotone steady states of the saturating-diffusion problem.
//!
//! A steady state satisfies `eps * h(u') = f(u) + C` with `h(s) = s/sqrt(1+s^2)`.
//! Writing `D(u) = |f(u) + C|` the profile obeys `|u'| = D / sqrt(eps^2 - D^2)`,
//! so `x(u)` is the integral of `w = sqrt(eps^2 - D^2) / D`.
//!
//! The integration constant is handled through a gap variable `d`: for an
//! increasing profile `D = f - m + d` (so `C = d - m`), for a decreasing one
//! `D = M - f + d` (so `C = -(M + d)`). In both cases `d` ranges over
//! `(0, eps - (M - m))`, `D` vanishes only as `d -> 0`, and `eps - D` is
//! assembled from nonnegative pieces, which keeps the square root accurate
//! near both ends of the admissible interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{extrema_detail, Direction, Flux, Grid, GridField, ProblemSpec};
use crate::quadrature::{integrate_with_breaks, QuadOptions};
use crate::roots::{self, RootOptions};

/// `sqrt(eps^2 - D^2) / D` for the family of constants parametrized by a gap `d`.
///
/// Near a point where `D` is smallest the integrand behaves like `eps / D`
/// and the optimal gap can be exponentially small, far below the spacing of
/// floating-point numbers around that point. Every integral is therefore
/// split at the extremal points of `f` and each piece is integrated in the
/// distance `r` from its steep end, with `f(a) - f(a - r)` evaluated by
/// [`Flux::drop`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct GapIntegrand {
    pub flux: Flux,
    pub epsilon: f64,
    /// `+1`: `D = f - m + d`; `-1`: `D = M - f + d`.
    pub orientation: f64,
    pub m: f64,
    pub big_m: f64,
    pub arg_m: f64,
    pub arg_big_m: f64,
}

impl GapIntegrand {
    pub fn new(flux: Flux, epsilon: f64, a: f64, b: f64, orientation: f64) -> Self {
        let e = extrema_detail(&flux, a, b);
        GapIntegrand {
            flux,
            epsilon,
            orientation,
            m: e.m,
            big_m: e.big_m,
            arg_m: e.arg_m,
            arg_big_m: e.arg_big_m,
        }
    }

    /// Upper end of the admissible gap interval, `eps - (M - m)`.
    pub fn room(&self) -> f64 {
        self.epsilon - (self.big_m - self.m)
    }

    /// `D - d` at `s`, measured from the extremum.
    #[inline]
    fn below(&self, s: f64) -> f64 {
        let fs = self.flux.eval(s);
        let v = if self.orientation > 0.0 { fs - self.m } else { self.big_m - fs };
        v.max(0.0)
    }

    /// Integrand from `D - d` at the point.
    #[inline]
    fn w_from_below(&self, below: f64, d: f64) -> f64 {
        let span = self.big_m - self.m;
        let below = below.clamp(0.0, span);
        let dd = below + d;
        // exp(ln room) can land one ulp above room
        let rest = (self.room() - d).max(0.0) + (span - below);
        (rest * (self.epsilon + dd)).sqrt() / dd
    }

    #[inline]
    pub fn w(&self, s: f64, d: f64) -> f64 {
        self.w_from_below(self.below(s), d)
    }

    /// Magnitude of the slope `D / sqrt(eps^2 - D^2)` at `s`.
    #[inline]
    pub fn slope_magnitude(&self, s: f64, d: f64) -> f64 {
        1.0 / self.w(s, d)
    }

    /// Integral of `w` over the piece `[p, q]` (p < q, no extremum inside).
    fn piece(&self, p: f64, q: f64, d: f64) -> Result<f64> {
        let (bp, bq) = (self.below(p), self.below(q));
        let (anchor, b0, dir) = if bp <= bq { (p, bp, 1.0) } else { (q, bq, -1.0) };
        let len = q - p;
        let sigma = self.orientation;
        let integrand = |r: f64| {
            // s = anchor + dir * r, so anchor - s = -dir * r
            let drop = self.flux.drop(anchor, -dir * r);
            self.w_from_below(b0 - sigma * drop, d)
        };
        Ok(integrate_with_breaks(integrand, 0.0, len, &[], QuadOptions::default())?.value)
    }

    /// Signed integral of `w` from `a` to `b`.
    pub fn integral(&self, a: f64, b: f64, d: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut cuts = vec![lo];
        let mut inner: Vec<f64> = [self.arg_m, self.arg_big_m]
            .into_iter()
            .filter(|&c| c > lo && c < hi)
            .collect();
        inner.sort_by(f64::total_cmp);
        cuts.extend(inner);
        cuts.push(hi);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += self.piece(w[0], w[1], d)?;
        }
        Ok(sign * total)
    }
}

/// A monotone steady state sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub spec: ProblemSpec,
    pub direction: Direction,
    pub c_const: f64,
    /// Gap parameter `d` of the constant (see module docs).
    pub gap: f64,
    pub profile: GridField,
    pub slope: GridField,
}

fn kernel(spec: &ProblemSpec) -> GapIntegrand {
    GapIntegrand::new(spec.flux, spec.epsilon, spec.u_minus, spec.u_plus, spec.direction().sign())
}

fn gap_to_constant(k: &GapIntegrand, d: f64) -> f64 {
    if k.orientation > 0.0 {
        d - k.m
    } else {
        -(k.big_m + d)
    }
}

fn constant_to_gap(k: &GapIntegrand, c: f64) -> f64 {
    if k.orientation > 0.0 {
        c + k.m
    } else {
        -c - k.big_m
    }
}

/// Admissible open interval for the constant `C`.
pub fn constant_range(spec: &ProblemSpec) -> (f64, f64) {
    let k = kernel(spec);
    let a = gap_to_constant(&k, 0.0);
    let b = gap_to_constant(&k, k.room());
    (a.min(b), a.max(b))
}

fn phi_gap(k: &GapIntegrand, spec: &ProblemSpec, d: f64) -> Result<f64> {
    let (lo, hi) = spec.value_range();
    k.integral(lo, hi, d)
}

/// `Phi(C)`: the length of domain needed by the monotone profile with
/// constant `C` to connect the boundary values. The direction is the one
/// implied by the boundary data.
pub fn phi(c_const: f64, spec: &ProblemSpec) -> Result<f64> {
    let k = kernel(spec);
    let d = constant_to_gap(&k, c_const);
    if !(d > 0.0 && d < k.room()) {
        let (lo, hi) = constant_range(spec);
        return Err(Error::OutOfRange { value: c_const, lo, hi });
    }
    phi_gap(&k, spec, d)
}

/// `Phi` as a function of the gap `d` in `(0, eps - (M - m))`, which keeps
/// full relative precision when the constant is exponentially close to the
/// end of its interval.
pub fn phi_at_gap(spec: &ProblemSpec, d: f64) -> Result<f64> {
    let k = kernel(spec);
    if !(d > 0.0 && d < k.room()) {
        return Err(Error::OutOfRange { value: d, lo: 0.0, hi: k.room() });
    }
    phi_gap(&k, spec, d)
}

/// Length threshold `c_I` (increasing) or `c_D` (decreasing): the limit of
/// `Phi` at the end of the admissible interval where `f + C` reaches `eps`.
pub fn threshold(spec: &ProblemSpec, direction: Direction) -> Result<f64> {
    if direction != spec.direction() {
        return Err(Error::DirectionMismatch {
            requested: direction,
            u_minus: spec.u_minus,
            u_plus: spec.u_plus,
        });
    }
    let k = kernel(spec);
    let room = k.room();
    if room <= 0.0 {
        return Err(Error::GapViolation { span: k.big_m - k.m, epsilon: spec.epsilon });
    }
    phi_gap(&k, spec, room)
}

/// Upper bound `sqrt(2) eps |u+ - u-| / (eps - (M - m))` on the threshold.
pub fn threshold_bound(spec: &ProblemSpec) -> f64 {
    let k = kernel(spec);
    2f64.sqrt() * spec.epsilon * (spec.u_plus - spec.u_minus).abs() / k.room()
}

fn solve_gap(spec: &ProblemSpec, k: &GapIntegrand) -> Result<f64> {
    let room = k.room();
    if room <= 0.0 {
        return Err(Error::NoRoot(format!(
            "flux oscillation {} is not below epsilon {}",
            k.big_m - k.m,
            spec.epsilon
        )));
    }
    let target = 2.0 * spec.ell;
    let t_hi = room.ln();
    let at_room = phi_gap(k, spec, room)?;
    if at_room >= target {
        return Err(Error::NoRoot(format!(
            "domain length {target} does not exceed the threshold {at_room}"
        )));
    }
    // Phi decreases in d; walk down in log d until Phi exceeds 2 ell.
    let g = |t: f64| -> Result<f64> { Ok(target - phi_gap(k, spec, t.exp())?) };
    let floor = (room * 1e-280).ln();
    let mut t_lo = t_hi - 1.0;
    let mut step = 1.0;
    let mut g_lo = g(t_lo)?;
    while g_lo >= 0.0 {
        if t_lo <= floor {
            return Err(Error::NoRoot("Phi stays below 2 ell over the admissible interval".into()));
        }
        step *= 2.0;
        t_lo = (t_lo - step).max(floor);
        g_lo = g(t_lo)?;
    }
    let ftol = 1e-13 * target.max(1.0);
    let t = roots::solve_bracketed(g, t_lo, t_hi, RootOptions { xtol: 1e-15, ftol, max_iter: 200 })?;
    Ok(t.exp().min(room))
}

/// The constant `C` with `Phi(C) = 2 ell`.
pub fn solve_integration_constant(spec: &ProblemSpec, direction: Direction) -> Result<f64> {
    if direction != spec.direction() {
        return Err(Error::DirectionMismatch {
            requested: direction,
            u_minus: spec.u_minus,
            u_plus: spec.u_plus,
        });
    }
    let k = kernel(spec);
    let d = solve_gap(spec, &k)?;
    Ok(gap_to_constant(&k, d))
}

/// Inverts the monotone map `x(u) = x0 + |int_{u0}^{u} w|` at the targets
/// `xs` (increasing), marching from `(x0, u0)` toward `u_end`.
pub(crate) fn invert_monotone(
    k: &GapIntegrand,
    d: f64,
    x0: f64,
    u0: f64,
    u_end: f64,
    xs: &[f64],
) -> Result<Vec<f64>> {
    let dir = if u_end >= u0 { 1.0 } else { -1.0 };
    let mut out = Vec::with_capacity(xs.len());
    let (mut xa, mut ua) = (x0, u0);
    for &x in xs {
        if x <= xa {
            out.push(ua);
            continue;
        }
        // bracket in u: [ua, u_end] along dir; F(u) = xa + |int_ua^u w| - x is increasing along dir
        let mut lo = ua;
        let mut hi = u_end;
        let f_hi = xa + (k.integral(ua, hi, d)?).abs() - x;
        if f_hi <= 0.0 {
            out.push(u_end);
            xa = xa + (k.integral(ua, u_end, d)?).abs();
            ua = u_end;
            continue;
        }
        // initial guess from the local slope
        let mut u = ua + dir * (x - xa) * k.slope_magnitude(ua, d);
        if (u - lo) * dir <= 0.0 || (u - hi) * dir >= 0.0 {
            u = 0.5 * (lo + hi);
        }
        let mut fu;
        let mut iters = 0;
        loop {
            fu = xa + (k.integral(ua, u, d)?).abs() - x;
            if fu.abs() <= 1e-14 * (1.0 + x.abs()) || iters >= 100 {
                break;
            }
            if fu < 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let slope = k.w(u, d);
            let mut next = u - dir * fu / slope;
            if !next.is_finite() || (next - lo) * dir <= 0.0 || (next - hi) * dir >= 0.0 {
                next = 0.5 * (lo + hi);
            }
            if next == u || (hi - lo).abs() <= 4.0 * f64::EPSILON * u.abs().max(f64::MIN_POSITIVE) {
                break;
            }
            u = next;
            iters += 1;
        }
        xa = x + fu;
        ua = u;
        out.push(u);
    }
    Ok(out)
}

/// Samples the steady state with constant `c_const` on `grid`.
pub fn reconstruct(spec: &ProblemSpec, c_const: f64, grid: &Grid) -> Result<SteadyState> {
    let k = kernel(spec);
    let d = constant_to_gap(&k, c_const);
    if !(d > 0.0 && d < k.room()) {
        let (lo, hi) = constant_range(spec);
        return Err(Error::OutOfRange { value: c_const, lo, hi });
    }
    reconstruct_gap(spec, &k, d, c_const, grid)
}

fn reconstruct_gap(spec: &ProblemSpec, k: &GapIntegrand, d: f64, c_const: f64, grid: &Grid) -> Result<SteadyState> {
    let n = grid.n_cells;
    let interior = &grid.nodes[1..n];
    let mut values = Vec::with_capacity(n + 1);
    values.push(spec.u_minus);
    values.extend(invert_monotone(k, d, -spec.ell, spec.u_minus, spec.u_plus, interior)?);
    values.push(spec.u_plus);
    let sign = spec.direction().sign();
    let slopes = values.iter().map(|&u| sign * k.slope_magnitude(u, d)).collect();
    Ok(SteadyState {
        spec: *spec,
        direction: spec.direction(),
        c_const,
        gap: d,
        profile: GridField::new(grid.clone(), values, 0.0)?,
        slope: GridField::new(grid.clone(), slopes, 0.0)?,
    })
}

/// Solves for the constant and samples the profile in one call.
pub fn steady_state(spec: &ProblemSpec, grid: &Grid) -> Result<SteadyState> {
    let k = kernel(spec);
    let d = solve_gap(spec, &k)?;
    reconstruct_gap(spec, &k, d, gap_to_constant(&k, d), grid)
}

/// Speed `(f(u-) - f(u+)) / (u+ - u-)` of the traveling front joining the
/// boundary states.
pub fn admissible_speed(spec: &ProblemSpec) -> f64 {
    (spec.flux.eval(spec.u_minus) - spec.flux.eval(spec.u_plus)) / (spec.u_plus - spec.u_minus)
}
