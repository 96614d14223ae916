//! One-parameter family of approximate steady states glued at an interface.
//!
//! For an interface location `xi`, the element `U(x; xi)` solves the steady
//! equation `eps h(U') = f(U) - kappa` on each side of `xi`, with
//! `U(-ell) = u-`, `U(xi) = 0`, `U(ell) = u+`. The two constants are fixed by
//!
//! ```text
//! Psi(kappa-, u-) = xi + ell,    Psi(kappa+, u+) = xi - ell,
//! Psi(kappa, u)   = int_0^u sqrt(eps^2 - (f(s) - kappa)^2) / (kappa - f(s)) ds,
//! ```
//!
//! and the element fails to be stationary only through a point defect of
//! mass `kappa- - kappa+` at `xi`. Its sign drives the interface.
//!
//! Each side is solved in the gap `delta = kappa - max f` on `[0, u]`, which
//! can be exponentially small; the difference of the constants is assembled
//! from the difference of maxima and the difference of gaps, so it keeps full
//! relative precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::spatial_operator;
use crate::problem::{Grid, GridField, ProblemSpec};
use crate::roots::{self, RootOptions};
use crate::spectral;
use crate::steady::{invert_monotone, GapIntegrand};

/// Margin by which the admissible `xi` interval is shrunk on each side.
const XI_MARGIN: f64 = 1e-6;

/// Distance from the equilibrium at which the reduced equation stops.
const ARRIVAL_TOL: f64 = 1e-9;

/// A glued approximate steady state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyElement {
    pub xi: f64,
    pub kappa_minus: f64,
    pub kappa_plus: f64,
    pub profile: GridField,
    /// Half-width of the window over which the two branches are blended.
    pub smoothing_width: f64,
    /// `kappa- - kappa+`.
    pub omega: f64,
}

/// The two constants of an element, with their gaps above the side maxima.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaPair {
    pub kappa_minus: f64,
    pub kappa_plus: f64,
    pub gap_minus: f64,
    pub gap_plus: f64,
    pub max_minus: f64,
    pub max_plus: f64,
}

impl KappaPair {
    /// `kappa- - kappa+` without cancellation between the two constants.
    pub fn omega(&self) -> f64 {
        (self.max_minus - self.max_plus) + (self.gap_minus - self.gap_plus)
    }
}

/// Solution of the reduced interface equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    pub xi_values: Vec<f64>,
    pub equilibrium: f64,
}

/// How the first adjoint eigenfunction entering `theta` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    /// The closed-form eigenfunction of the hyperbolic limit operator.
    HyperbolicClosedForm,
    /// The discrete first eigenfunction of the linearization, paired with
    /// the discrete residual of the smoothed element.
    DiscreteAdjoint,
}

/// Per-side kernels `kappa - f` on `[0, u-]` and `[0, u+]`.
#[derive(Debug, Clone, Copy)]
struct Sides {
    minus: GapIntegrand,
    plus: GapIntegrand,
    u_minus: f64,
    u_plus: f64,
    ell: f64,
    range: (f64, f64),
}

impl Sides {
    fn new(spec: &ProblemSpec) -> Result<Self> {
        spec.validate()?;
        if !(spec.u_minus > 0.0 && spec.u_plus < 0.0) {
            return Err(Error::UnsupportedConfiguration(format!(
                "the glued family needs u- > 0 > u+, got u- = {}, u+ = {}",
                spec.u_minus, spec.u_plus
            )));
        }
        let minus = GapIntegrand::new(spec.flux, spec.epsilon, 0.0, spec.u_minus, -1.0);
        let plus = GapIntegrand::new(spec.flux, spec.epsilon, spec.u_plus, 0.0, -1.0);
        for k in [&minus, &plus] {
            if k.room() <= 0.0 {
                return Err(Error::GapViolation { span: k.big_m - k.m, epsilon: spec.epsilon });
            }
        }
        // Psi(., u-) and Psi(., u+) at the largest admissible constant
        let c_minus = minus.integral(0.0, spec.u_minus, minus.room())?;
        let c_plus = plus.integral(0.0, spec.u_plus, plus.room())?;
        let range = (-spec.ell + c_minus + XI_MARGIN, spec.ell + c_plus - XI_MARGIN);
        Ok(Sides { minus, plus, u_minus: spec.u_minus, u_plus: spec.u_plus, ell: spec.ell, range })
    }

    fn kappas(&self, xi: f64) -> Result<KappaPair> {
        let (lo, hi) = self.range;
        if !(xi >= lo && xi <= hi) {
            return Err(Error::XiOutOfRange { xi, lo, hi });
        }
        let gap_minus = solve_side(&self.minus, self.u_minus, self.ell + xi)?;
        let gap_plus = solve_side(&self.plus, self.u_plus, self.ell - xi)?;
        Ok(KappaPair {
            kappa_minus: self.minus.big_m + gap_minus,
            kappa_plus: self.plus.big_m + gap_plus,
            gap_minus,
            gap_plus,
            max_minus: self.minus.big_m,
            max_plus: self.plus.big_m,
        })
    }
}

/// Gap `delta` with `|Psi(max f + delta, u)| = length`.
fn solve_side(k: &GapIntegrand, u: f64, length: f64) -> Result<f64> {
    let room = k.room();
    // |Psi| decreases in delta
    let g = |t: f64| -> Result<f64> { Ok(k.integral(0.0, u, t.exp())?.abs() - length) };
    let t_hi = room.ln();
    let g_hi = g(t_hi)?;
    if g_hi >= 0.0 {
        return Err(Error::NoRoot(format!("|Psi| at the largest constant is {} >= {length}", g_hi + length)));
    }
    let floor = (room * 1e-280).ln();
    let (mut t_lo, mut step) = (t_hi - 1.0, 1.0);
    while g(t_lo)? <= 0.0 {
        if t_lo <= floor {
            return Err(Error::NoRoot(format!("|Psi| stays below {length} over the admissible constants")));
        }
        step *= 2.0;
        t_lo = (t_lo - step).max(floor);
    }
    let ftol = 1e-12 * length.max(1.0);
    let t = roots::solve_bracketed(g, t_lo, t_hi, RootOptions { xtol: 1e-15, ftol, max_iter: 200 })?;
    Ok(t.exp().min(room))
}

/// `Psi(kappa, u) = int_0^u sqrt(eps^2 - (f - kappa)^2) / (kappa - f) ds`.
pub fn psi_integral(kappa: f64, u_target: f64, spec: &ProblemSpec) -> Result<f64> {
    if u_target == 0.0 {
        return Ok(0.0);
    }
    let k = GapIntegrand::new(spec.flux, spec.epsilon, u_target.min(0.0), u_target.max(0.0), -1.0);
    let gap = kappa - k.big_m;
    if gap <= 0.0 {
        return Err(Error::SingularPath { target: u_target });
    }
    if gap > k.room() {
        return Err(Error::OutOfRange { value: kappa, lo: k.big_m, hi: k.big_m + k.room() });
    }
    k.integral(0.0, u_target, gap)
}

/// Admissible interface locations `(-ell + c- , ell + c+)`, shrunk by `1e-6`.
pub fn xi_range(spec: &ProblemSpec) -> Result<(f64, f64)> {
    Ok(Sides::new(spec)?.range)
}

/// The constants `kappa-`, `kappa+` of the element glued at `xi`.
pub fn solve_kappas(xi: f64, spec: &ProblemSpec) -> Result<KappaPair> {
    Sides::new(spec)?.kappas(xi)
}

/// `Omega(xi) = kappa-(xi) - kappa+(xi)`, the strength of the point defect.
pub fn omega_error(xi: f64, spec: &ProblemSpec) -> Result<f64> {
    Ok(solve_kappas(xi, spec)?.omega())
}

/// The interface location at which the element is an exact steady state:
/// the root of the decreasing function `Omega`, by bisection.
pub fn equilibrium_xi(spec: &ProblemSpec) -> Result<f64> {
    let sides = Sides::new(spec)?;
    let (lo, hi) = sides.range;
    let g_lo = sides.kappas(lo)?.omega();
    let g_hi = sides.kappas(hi)?.omega();
    if g_lo == 0.0 {
        return Ok(lo);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    if (g_lo < 0.0) == (g_hi < 0.0) {
        return Err(Error::NoSignChange { a: lo, b: hi, fa: g_lo, fb: g_hi });
    }
    let (mut a, mut b, mut ga) = (lo, hi, g_lo);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b || b - a <= 1e-15 {
            break;
        }
        let gm = sides.kappas(m)?.omega();
        if gm == 0.0 {
            return Ok(m);
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Two-sided estimates of `kappa+ - f(u+)` and `kappa- - f(u-)` for a
/// convex flux with `f(0) = 0`, as `((lo+, hi+), (lo-, hi-))`:
///
/// ```text
/// u+ f'(u+) / (exp(f'(u+)(xi - ell + u+)/eps) - 1) <= kappa+ - f(u+) <= f(u+) / (exp(f(u+)(xi - ell)/(eps u+)) - 1)
/// u- f'(u-) / (exp(f'(u-)(xi + ell + u-)/eps) - 1) <= kappa- - f(u-) <= f(u-) / (exp(f(u-)(xi + ell)/(eps u-)) - 1)
/// ```
///
/// The lower bounds come from `sqrt(eps^2 - D^2) >= eps - D` and the
/// tangent line of `f` at `u+-`, the upper ones from `sqrt(eps^2 - D^2) <= eps`
/// and the chord of `f` through the origin.
pub fn kappa_bounds(xi: f64, spec: &ProblemSpec) -> Result<((f64, f64), (f64, f64))> {
    if spec.flux.convexity_floor().is_none() {
        return Err(Error::UnsupportedConfiguration(format!(
            "the constant estimates need a uniformly convex flux, got {}",
            spec.flux.label()
        )));
    }
    let (eps, ell) = (spec.epsilon, spec.ell);
    let (up, um) = (spec.u_plus, spec.u_minus);
    let f = |u: f64| spec.flux.eval(u);
    let df = |u: f64| spec.flux.deriv(u);
    let plus_lo = up * df(up) / ((df(up) * (xi - ell + up) / eps).exp_m1());
    let plus_hi = f(up) / ((f(up) * (xi - ell) / (eps * up)).exp_m1());
    let minus_lo = um * df(um) / ((df(um) * (xi + ell + um) / eps).exp_m1());
    let minus_hi = f(um) / ((f(um) * (xi + ell) / (eps * um)).exp_m1());
    Ok(((plus_lo, plus_hi), (minus_lo, minus_hi)))
}

/// Characteristic speeds `(f'(u-), -f'(u+))`, both positive for a
/// compressive layer.
fn inflow_speeds(spec: &ProblemSpec) -> Result<(f64, f64)> {
    let a_minus = spec.flux.deriv(spec.u_minus);
    let a_plus = -spec.flux.deriv(spec.u_plus);
    if !(a_minus > 0.0 && a_plus > 0.0) {
        return Err(Error::UnsupportedConfiguration(format!(
            "characteristics must enter the layer from both sides, got f'(u-) = {}, f'(u+) = {}",
            a_minus, -a_plus
        )));
    }
    Ok((a_minus, a_plus))
}

/// First eigenfunction of the hyperbolic limit of the adjoint linearization,
/// vanishing at both ends and continuous at `xi`.
pub fn psi1_hyperbolic(x: f64, xi: f64, spec: &ProblemSpec) -> Result<f64> {
    let (a_minus, a_plus) = inflow_speeds(spec)?;
    let (eps, ell) = (spec.epsilon, spec.ell);
    let one_minus = |z: f64| -(-z).exp_m1();
    Ok(if x < xi {
        one_minus(a_plus * (ell - xi) / eps) * one_minus(a_minus * (ell + x) / eps)
    } else {
        one_minus(a_minus * (ell + xi) / eps) * one_minus(a_plus * (ell - x) / eps)
    })
}

/// Projection `<psi_1, P[U(.; xi)]>` of the element's defect on the first
/// adjoint eigenfunction.
pub fn theta(xi: f64, spec: &ProblemSpec, mode: ThetaMode) -> Result<f64> {
    match mode {
        ThetaMode::HyperbolicClosedForm => Ok(psi1_hyperbolic(xi, xi, spec)? * omega_error(xi, spec)?),
        ThetaMode::DiscreteAdjoint => {
            let grid = Grid::for_spec(spec, Grid::DEFAULT_CELLS)?;
            theta_discrete(xi, spec, &grid)
        }
    }
}

/// Discrete variant of [`theta`]: the adjoint eigenfunction is `rho phi_1`
/// from the discrete Sturm-Liouville problem, scaled to agree with the
/// closed form at `xi`, and the defect is the discrete operator applied to
/// the smoothed element.
pub fn theta_discrete(xi: f64, spec: &ProblemSpec, grid: &Grid) -> Result<f64> {
    let element = build_element(xi, spec, grid, default_smoothing(grid))?;
    let coeffs = spectral::assemble(&element, spec)?;
    let report = spectral::eigenpairs(&coeffs, 1)?;
    let phi = &report.eigenfunctions[0];
    let log_rho = &coeffs.log_rho;
    let log_at = linear_interp(grid, log_rho, xi);
    let phi_at = phi.interpolate(xi);
    if phi_at == 0.0 {
        return Err(Error::ConvergenceFailure("first eigenfunction vanishes at the interface".into()));
    }
    let residual = spatial_operator(&element.profile, spec);
    let dx = grid.spacing;
    let mut sum = 0.0;
    for i in 1..grid.n_cells {
        let psi = (log_rho[i] - log_at).exp() * phi.values[i] / phi_at;
        sum += psi * residual.values[i] * dx;
    }
    Ok(psi1_hyperbolic(xi, xi, spec)? * sum)
}

fn linear_interp(grid: &Grid, values: &[f64], x: f64) -> f64 {
    let field = GridField { grid: grid.clone(), values: values.to_vec(), time: 0.0 };
    field.interpolate(x)
}

/// `d xi / dt = Omega(xi) / (u- - u+)`: the defect projected on the first
/// adjoint eigenfunction, divided by the projection of `d U / d xi`. Both
/// carry the factor `psi_1(xi)`, so it cancels.
pub fn interface_velocity(xi: f64, spec: &ProblemSpec) -> Result<f64> {
    Ok(omega_error(xi, spec)? / (spec.u_minus - spec.u_plus))
}

/// Default half-width of the blending window: two cells.
pub fn default_smoothing(grid: &Grid) -> f64 {
    2.0 * grid.spacing
}

/// Quintic smoothstep, `C^2` at both ends.
fn smootherstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// Continues a branch `eps h(U') = f(U) - kappa` from `(x0, 0)` to each of
/// `xs` by classical Runge-Kutta. Used only over the short blending window.
fn continue_branch(spec: &ProblemSpec, kappa: f64, x0: f64, xs: &[f64], max_step: f64) -> Vec<f64> {
    let eps = spec.epsilon;
    let slope = |u: f64| {
        let d = (kappa - spec.flux.eval(u)).clamp(-0.999_999 * eps, 0.999_999 * eps);
        -d / ((eps - d) * (eps + d)).sqrt()
    };
    xs.iter()
        .map(|&x| {
            let span = x - x0;
            let steps = ((span.abs() / max_step).ceil() as usize).max(1);
            let h = span / steps as f64;
            let mut u = 0.0;
            for _ in 0..steps {
                let k1 = slope(u);
                let k2 = slope(u + 0.5 * h * k1);
                let k3 = slope(u + 0.5 * h * k2);
                let k4 = slope(u + h * k3);
                u += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            }
            u
        })
        .collect()
}

/// Samples the element glued at `xi` on `grid`. The left branch runs from
/// `(-ell, u-)` to `(xi, 0)`, the right one from `(xi, 0)` to `(ell, u+)`;
/// with `smoothing_width > 0` each branch is continued across `xi` and the
/// two are blended with a quintic smoothstep over `[xi - w, xi + w]`.
pub fn build_element(xi: f64, spec: &ProblemSpec, grid: &Grid, smoothing_width: f64) -> Result<FamilyElement> {
    if !(smoothing_width >= 0.0) {
        return Err(Error::InvalidSpec(format!("smoothing width must be nonnegative, got {smoothing_width}")));
    }
    let sides = Sides::new(spec)?;
    let kappas = sides.kappas(xi)?;
    let nodes = &grid.nodes;
    let n = grid.n_cells;
    let w = smoothing_width.min(0.5 * (spec.ell - xi.abs()));

    let left_x: Vec<f64> = nodes[1..n].iter().copied().filter(|&x| x <= xi).collect();
    let right_x: Vec<f64> = nodes[1..n].iter().copied().filter(|&x| x > xi).collect();
    let left = invert_monotone(&sides.minus, kappas.gap_minus, -spec.ell, spec.u_minus, 0.0, &left_x)?;
    let right = invert_monotone(&sides.plus, kappas.gap_plus, xi, 0.0, spec.u_plus, &right_x)?;

    let mut values = Vec::with_capacity(n + 1);
    values.push(spec.u_minus);
    values.extend(left);
    values.extend(right);
    values.push(spec.u_plus);

    if w > 0.0 {
        let window: Vec<usize> = (1..n).filter(|&i| (nodes[i] - xi).abs() < w).collect();
        let xs: Vec<f64> = window.iter().map(|&i| nodes[i]).collect();
        let step = grid.spacing / 32.0;
        // left branch continued to the right of xi, right branch to the left
        let left_ext = continue_branch(spec, kappas.kappa_minus, xi, &xs, step);
        let right_ext = continue_branch(spec, kappas.kappa_plus, xi, &xs, step);
        for (j, &i) in window.iter().enumerate() {
            let x = nodes[i];
            let (ul, ur) = if x <= xi { (values[i], right_ext[j]) } else { (left_ext[j], values[i]) };
            let chi = smootherstep((x - (xi - w)) / (2.0 * w));
            values[i] = (1.0 - chi) * ul + chi * ur;
        }
    }

    Ok(FamilyElement {
        xi,
        kappa_minus: kappas.kappa_minus,
        kappa_plus: kappas.kappa_plus,
        profile: GridField::new(grid.clone(), values, 0.0)?,
        smoothing_width: w,
        omega: kappas.omega(),
    })
}

/// Integrates the reduced interface equation from `xi0` at `t = 0`.
pub fn reduced_ode_solve(xi0: f64, spec: &ProblemSpec, output_times: &[f64]) -> Result<ReducedTrajectory> {
    reduced_ode_solve_from(0.0, xi0, spec, output_times)
}

/// Integrates `d xi / dt = `[`interface_velocity`] from `(t0, xi0)` with
/// step-doubling RK4 (tolerance `1e-10 + 1e-8 |xi|` per step), stopping
/// exactly at each output time.
pub fn reduced_ode_solve_from(t0: f64, xi0: f64, spec: &ProblemSpec, output_times: &[f64]) -> Result<ReducedTrajectory> {
    if output_times.windows(2).any(|w| w[1] <= w[0]) || output_times.first().is_some_and(|&t| t < t0) {
        return Err(Error::InvalidSpec("output times must be increasing and not before the start time".into()));
    }
    let sides = Sides::new(spec)?;
    let equilibrium = equilibrium_xi(spec)?;
    let jump = spec.u_minus - spec.u_plus;
    let rhs = |xi: f64| -> Result<f64> { Ok(sides.kappas(xi)?.omega() / jump) };

    let rk4 = |xi: f64, v0: f64, h: f64| -> Result<f64> {
        let k1 = v0;
        let k2 = rhs(xi + 0.5 * h * k1)?;
        let k3 = rhs(xi + 0.5 * h * k2)?;
        let k4 = rhs(xi + h * k3)?;
        Ok(xi + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0)
    };

    let mut times = Vec::with_capacity(output_times.len());
    let mut xi_values = Vec::with_capacity(output_times.len());
    let (mut t, mut xi) = (t0, xi0);
    let mut v = rhs(xi)?;
    let mut h = if v == 0.0 { f64::INFINITY } else { 1e-3 * ((xi - equilibrium).abs().max(1e-6) / v.abs()) };
    for &t_out in output_times {
        while t < t_out {
            if v == 0.0 {
                t = t_out;
                break;
            }
            let hs = h.min(t_out - t);
            let attempt = (|| -> Result<(f64, f64)> {
                let full = rk4(xi, v, hs)?;
                let half = rk4(xi, v, 0.5 * hs)?;
                let v_half = rhs(half)?;
                let two = rk4(half, v_half, 0.5 * hs)?;
                Ok((two + (two - full) / 15.0, (two - full).abs() / 15.0))
            })();
            match attempt {
                Ok((next, err)) => {
                    let tol = 1e-10 + 1e-8 * xi.abs();
                    if err <= tol {
                        t = if hs == t_out - t { t_out } else { t + hs };
                        xi = next;
                        // below this distance the velocity is rounding noise
                        // from the constant solves
                        if (xi - equilibrium) * (xi0 - equilibrium) <= 0.0
                            || (xi - equilibrium).abs() <= ARRIVAL_TOL
                        {
                            xi = equilibrium;
                            v = 0.0;
                        } else {
                            v = rhs(xi)?;
                        }
                    }
                    let factor = if err == 0.0 { 5.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0) };
                    // do not let a clipped step shrink the controller's step
                    if err > tol || hs == h {
                        h = hs * factor;
                    }
                }
                Err(Error::XiOutOfRange { .. }) => h = 0.5 * hs,
                Err(e) => return Err(e),
            }
            if h < 1e-12 * t.abs().max(1.0) {
                return Err(Error::ConvergenceFailure(format!("reduced equation step collapsed at t = {t}")));
            }
        }
        times.push(t_out);
        xi_values.push(xi);
    }
    Ok(ReducedTrajectory { times, xi_values, equilibrium })
}

/// Mean interface speed `|xi(t_F) - xi(t_I)| / (t_F - t_I)` over a track,
/// with `t_I = t_start` and `t_F` the first time after it at which
/// `|xi| <= stop_threshold` (linearly interpolated between samples).
pub fn average_speed(track: &[(f64, f64)], t_start: f64, stop_threshold: f64) -> Result<f64> {
    let never = Error::ThresholdNeverReached { t_start, threshold: stop_threshold };
    let first = track.iter().position(|&(t, _)| t >= t_start).ok_or(never.clone())?;
    let xi_start = if first > 0 && track[first].0 > t_start {
        let (t0, x0) = track[first - 1];
        let (t1, x1) = track[first];
        x0 + (x1 - x0) * (t_start - t0) / (t1 - t0)
    } else {
        track[first].1
    };
    let mut prev = (t_start, xi_start);
    for &(t, xi) in &track[first..] {
        if t <= t_start {
            continue;
        }
        if xi.abs() <= stop_threshold {
            let (tp, xp) = prev;
            let (t_f, xi_f) = if xp.abs() > stop_threshold {
                let target = stop_threshold.copysign(xp);
                let s = (target - xp) / (xi - xp);
                (tp + s * (t - tp), target)
            } else {
                (t, xi)
            };
            return Ok((xi_f - xi_start).abs() / (t_f - t_start));
        }
        prev = (t, xi);
    }
    Err(never)
}
