//! Method-of-lines discretization and time integration.
//!
//! The right-hand side `eps (h(u_x))_x - f(u)_x` is written in conservative
//! form on a uniform grid with Dirichlet nodes at both ends:
//!
//! ```text
//! P_i = (F_{i+1/2} - F_{i-1/2}) / dx,   F_{i+1/2} = eps h((u_{i+1} - u_i)/dx) - G(u_i, u_{i+1})
//! ```
//!
//! with `G` the central average of `f` (second order) or the Rusanov flux
//! (first order, monotone). Time stepping is explicit RK4 for a short
//! warm-up and backward Euler with damped Newton afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Grid, GridField, ProblemSpec};
use crate::steady::SteadyState;
use crate::tridiag::Tridiagonal;

/// Saturating flux function `h(s) = s / sqrt(1 + s^2)`.
#[inline]
pub fn h(s: f64) -> f64 {
    s / (1.0 + s * s).sqrt()
}

#[inline]
pub fn h_prime(s: f64) -> f64 {
    (1.0 + s * s).powf(-1.5)
}

/// Inverse of `h` on `(-1, 1)`.
pub fn h_inverse(a: f64) -> f64 {
    if a.abs() >= 1.0 {
        f64::INFINITY.copysign(a)
    } else {
        a / (1.0 - a * a).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diffusion {
    /// `eps (u_x / sqrt(1 + u_x^2))_x`
    MeanCurvature,
    /// `eps u_xx`
    Linear,
}

impl Diffusion {
    #[inline]
    fn flux(self, s: f64) -> f64 {
        match self {
            Diffusion::MeanCurvature => h(s),
            Diffusion::Linear => s,
        }
    }

    #[inline]
    fn flux_deriv(self, s: f64) -> f64 {
        match self {
            Diffusion::MeanCurvature => h_prime(s),
            Diffusion::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convection {
    /// `(f(u_i) + f(u_{i+1})) / 2`
    Central,
    /// Local Lax-Friedrichs with coefficient `max |f'|` over the cell pair.
    Rusanov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Discretization {
    pub diffusion: Diffusion,
    pub convection: Convection,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization { diffusion: Diffusion::MeanCurvature, convection: Convection::Central }
    }
}

impl Discretization {
    pub fn label(&self) -> String {
        let d = match self.diffusion {
            Diffusion::MeanCurvature => "mean_curvature",
            Diffusion::Linear => "linear_diffusion",
        };
        let c = match self.convection {
            Convection::Central => "central",
            Convection::Rusanov => "rusanov",
        };
        format!("{d}/{c}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExplicitRk4,
    ImplicitBdf1,
}

/// The discrete operator `P` for one problem, grid spacing and discretization.
#[derive(Debug, Clone, Copy)]
pub struct Operator {
    pub spec: ProblemSpec,
    pub disc: Discretization,
    pub dx: f64,
}

impl Operator {
    pub fn new(spec: &ProblemSpec, grid: &Grid, disc: Discretization) -> Self {
        Operator { spec: *spec, disc, dx: grid.spacing }
    }

    /// Numerical convective flux and its partial derivatives.
    #[inline]
    fn convective(&self, ul: f64, ur: f64) -> (f64, f64, f64) {
        let f = &self.spec.flux;
        let (fl, fr) = (f.eval(ul), f.eval(ur));
        let (dl, dr) = (f.deriv(ul), f.deriv(ur));
        let central = 0.5 * (fl + fr);
        match self.disc.convection {
            Convection::Central => (central, 0.5 * dl, 0.5 * dr),
            Convection::Rusanov => {
                let (al, ar) = (dl.abs(), dr.abs());
                let jump = ur - ul;
                let (alpha, da_l, da_r) = if al >= ar {
                    (al, dl.signum() * f.second_deriv(ul), 0.0)
                } else {
                    (ar, 0.0, dr.signum() * f.second_deriv(ur))
                };
                (
                    central - 0.5 * alpha * jump,
                    0.5 * dl + 0.5 * alpha - 0.5 * jump * da_l,
                    0.5 * dr - 0.5 * alpha - 0.5 * jump * da_r,
                )
            }
        }
    }

    /// Face fluxes `F_{i+1/2}`, `i = 0..n`.
    pub fn face_fluxes(&self, u: &[f64]) -> Vec<f64> {
        let eps = self.spec.epsilon;
        u.windows(2)
            .map(|w| {
                let s = (w[1] - w[0]) / self.dx;
                eps * self.disc.diffusion.flux(s) - self.convective(w[0], w[1]).0
            })
            .collect()
    }

    /// `P[u]` at every node; Dirichlet rows are zero.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let faces = self.face_fluxes(u);
        let n = u.len() - 1;
        let mut out = vec![0.0; n + 1];
        for i in 1..n {
            out[i] = (faces[i] - faces[i - 1]) / self.dx;
        }
        out
    }

    /// Face fluxes together with `dF/du_left`, `dF/du_right`.
    fn face_derivatives(&self, u: &[f64]) -> Vec<(f64, f64, f64)> {
        let eps = self.spec.epsilon;
        u.windows(2)
            .map(|w| {
                let s = (w[1] - w[0]) / self.dx;
                let (g, gl, gr) = self.convective(w[0], w[1]);
                let k = eps * self.disc.diffusion.flux_deriv(s) / self.dx;
                (eps * self.disc.diffusion.flux(s) - g, -k - gl, k - gr)
            })
            .collect()
    }

    /// Interior residual and Jacobian of `P` (unknowns are nodes `1..n`).
    pub fn linearize(&self, u: &[f64]) -> (Vec<f64>, Tridiagonal) {
        let faces = self.face_derivatives(u);
        let n = u.len() - 1;
        let m = n - 1;
        let mut p = vec![0.0; m];
        let mut jac = Tridiagonal::zeros(m);
        let inv = 1.0 / self.dx;
        for k in 0..m {
            let i = k + 1;
            let (fr, frl, frr) = faces[i];
            let (fl, fll, flr) = faces[i - 1];
            p[k] = (fr - fl) * inv;
            jac.diag[k] = (frl - flr) * inv;
            if k + 1 < m {
                jac.upper[k] = frr * inv;
            }
            if k > 0 {
                jac.lower[k - 1] = -fll * inv;
            }
        }
        (p, jac)
    }

    /// Largest stable explicit step for the state `u`.
    pub fn explicit_cap(&self, u: &[f64]) -> f64 {
        let eps = self.spec.epsilon;
        let max_speed = u.iter().fold(0.0_f64, |m, &v| m.max(self.spec.flux.deriv(v).abs()));
        let diffusive = self.dx * self.dx / eps;
        let cap = if max_speed > 0.0 { diffusive.min(self.dx / max_speed) } else { diffusive };
        0.4 * cap
    }
}

/// Discrete `P^eps[u]` with the default discretization.
pub fn spatial_operator(field: &GridField, spec: &ProblemSpec) -> GridField {
    spatial_operator_with(field, spec, Discretization::default())
}

pub fn spatial_operator_with(field: &GridField, spec: &ProblemSpec, disc: Discretization) -> GridField {
    let op = Operator::new(spec, &field.grid, disc);
    GridField { grid: field.grid.clone(), values: op.apply(&field.values), time: field.time }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 50 }
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Solves `G(u) = 0` for the interior unknowns by damped Newton, where
/// `linearize(u)` returns the interior residual and Jacobian.
fn damped_newton(
    u: &mut [f64],
    mut linearize: impl FnMut(&[f64]) -> (Vec<f64>, Tridiagonal),
    mut residual: impl FnMut(&[f64]) -> Vec<f64>,
    opts: NewtonOptions,
) -> std::result::Result<usize, f64> {
    let n = u.len() - 1;
    let (mut r, mut jac) = linearize(u);
    let mut norm = sup(&r);
    for it in 0..opts.max_iter {
        if norm <= opts.tol {
            return Ok(it);
        }
        let lu = match jac.factor() {
            Ok(lu) => lu,
            Err(_) => return Err(norm),
        };
        let delta = lu.solve(&r);
        let mut lambda = 1.0;
        let mut trial = u.to_vec();
        let accepted = loop {
            for k in 0..n - 1 {
                trial[k + 1] = u[k + 1] - lambda * delta[k];
            }
            let rt = residual(&trial);
            let nt = sup(&rt);
            if nt.is_finite() && nt <= (1.0 - 1e-4 * lambda) * norm {
                break Some(nt);
            }
            lambda *= 0.5;
            if lambda < 1.0 / 1024.0 {
                break None;
            }
        };
        match accepted {
            Some(_) => {
                u.copy_from_slice(&trial);
                let (r2, j2) = linearize(u);
                r = r2;
                jac = j2;
                norm = sup(&r);
            }
            None => {
                // at the roundoff floor the line search cannot make progress
                let step = sup(&delta);
                let scale = 1.0 + sup(u);
                if step <= 1e-13 * scale && norm <= 1e3 * opts.tol {
                    return Ok(it);
                }
                return Err(norm);
            }
        }
    }
    if norm <= opts.tol {
        Ok(opts.max_iter)
    } else {
        Err(norm)
    }
}

/// One backward Euler step `u - u_n - dt P(u) = 0`.
pub fn implicit_step(op: &Operator, un: &[f64], dt: f64, time: f64, opts: NewtonOptions) -> Result<Vec<f64>> {
    let mut u = un.to_vec();
    let lin = |v: &[f64]| {
        let (p, mut jac) = op.linearize(v);
        let r: Vec<f64> = (0..p.len()).map(|k| v[k + 1] - un[k + 1] - dt * p[k]).collect();
        for d in &mut jac.diag {
            *d = 1.0 - dt * *d;
        }
        for x in jac.lower.iter_mut().chain(jac.upper.iter_mut()) {
            *x *= -dt;
        }
        (r, jac)
    };
    let res = |v: &[f64]| {
        let p = op.apply(v);
        (1..v.len() - 1).map(|i| v[i] - un[i] - dt * p[i]).collect::<Vec<_>>()
    };
    match damped_newton(&mut u, lin, res, opts) {
        Ok(_) => Ok(u),
        Err(residual) => Err(Error::NewtonDivergence { time, dt, residual }),
    }
}

/// One classical RK4 step; fails if `dt` exceeds the stability cap.
pub fn explicit_step(op: &Operator, un: &[f64], dt: f64) -> Result<Vec<f64>> {
    let cap = op.explicit_cap(un);
    if dt > cap {
        return Err(Error::ExplicitCflViolation { dt, cap });
    }
    let axpy = |a: &[f64], k: &[f64], c: f64| a.iter().zip(k).map(|(x, y)| x + c * y).collect::<Vec<_>>();
    let k1 = op.apply(un);
    let k2 = op.apply(&axpy(un, &k1, 0.5 * dt));
    let k3 = op.apply(&axpy(un, &k2, 0.5 * dt));
    let k4 = op.apply(&axpy(un, &k3, dt));
    Ok((0..un.len())
        .map(|i| un[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Advances `state` by `dt`; boundary values are re-imposed exactly.
pub fn advance(
    state: &GridField,
    dt: f64,
    scheme: Scheme,
    spec: &ProblemSpec,
    disc: Discretization,
) -> Result<GridField> {
    if !(dt > 0.0) {
        return Err(Error::InvalidSpec(format!("time step must be positive, got {dt}")));
    }
    let op = Operator::new(spec, &state.grid, disc);
    let values = match scheme {
        Scheme::ExplicitRk4 => explicit_step(&op, &state.values, dt)?,
        Scheme::ImplicitBdf1 => implicit_step(&op, &state.values, dt, state.time, NewtonOptions::default())?,
    };
    let mut out = GridField { grid: state.grid.clone(), values, time: state.time + dt };
    out.impose_boundary(spec);
    Ok(out)
}

/// Zero of `P` near `guess` (the steady state of the discrete system).
pub fn discrete_steady_state(spec: &ProblemSpec, guess: &GridField, disc: Discretization) -> Result<GridField> {
    let op = Operator::new(spec, &guess.grid, disc);
    let mut u = guess.values.clone();
    let n = u.len() - 1;
    u[0] = spec.u_minus;
    u[n] = spec.u_plus;
    let res = |v: &[f64]| op.apply(v)[1..v.len() - 1].to_vec();
    let opts = NewtonOptions { tol: 1e-13, max_iter: 100 };
    match damped_newton(&mut u, |v| op.linearize(v), res, opts) {
        Ok(_) => {}
        Err(r) if r <= 1e-10 => {}
        Err(residual) => return Err(Error::NewtonDivergence { time: f64::INFINITY, dt: f64::INFINITY, residual }),
    }
    Ok(GridField { grid: guess.grid.clone(), values: u, time: guess.time })
}

/// Location of the single sign change of `field`, by linear interpolation.
pub fn interface_position(field: &GridField) -> Result<f64> {
    let crossings = crossings(field);
    match crossings.len() {
        0 => Err(Error::NoCrossing),
        1 => Ok(crossings[0].0),
        k => Err(Error::MultipleCrossings(k)),
    }
}

/// `(position, |jump|)` for every sign change between neighbouring nodes.
fn crossings(field: &GridField) -> Vec<(f64, f64)> {
    let v = &field.values;
    let x = &field.grid.nodes;
    let mut out = Vec::new();
    for i in 0..v.len() - 1 {
        let (a, b) = (v[i], v[i + 1]);
        if (a > 0.0 && b <= 0.0) || (a < 0.0 && b >= 0.0) {
            let t = a / (a - b);
            out.push((x[i] + t * (x[i + 1] - x[i]), (b - a).abs()));
        }
    }
    out
}

/// Interface for tracking: the unique crossing, or the steepest one when the
/// field changes sign several times.
pub fn track_interface(field: &GridField) -> Option<f64> {
    crossings(field)
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|c| c.0)
}

/// `z = eps h(u_x) - f(u)` at the faces, with `f` averaged over the face.
pub fn z_field(field: &GridField, spec: &ProblemSpec, diffusion: Diffusion) -> Vec<f64> {
    let dx = field.grid.spacing;
    let eps = spec.epsilon;
    field
        .values
        .windows(2)
        .map(|w| eps * diffusion.flux((w[1] - w[0]) / dx) - 0.5 * (spec.flux.eval(w[0]) + spec.flux.eval(w[1])))
        .collect()
}

/// `sup |z|` on the grid.
pub fn z_monitor(field: &GridField, spec: &ProblemSpec) -> f64 {
    sup(&z_field(field, spec, Diffusion::MeanCurvature))
}

/// `+1` if the field is non-decreasing, `-1` if non-increasing, `0` otherwise.
pub fn monotone_sign(field: &GridField) -> i8 {
    let inc = field.values.windows(2).all(|w| w[1] >= w[0]);
    let dec = field.values.windows(2).all(|w| w[1] <= w[0]);
    match (inc, dec) {
        (true, false) => 1,
        (false, true) => -1,
        _ => 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessReport {
    pub lhs: f64,
    pub alpha_ratio: f64,
    pub passes: bool,
    /// `h^{-1}(alpha_ratio)` when the test passes, infinite otherwise.
    pub c0_bound: f64,
}

/// `eps sup|h(u0')| + 2 sup|f(u0)|` against `eps`.
pub fn check_smallness(u0: &GridField, spec: &ProblemSpec) -> SmallnessReport {
    let eps = spec.epsilon;
    let hmax = sup(&u0.face_slopes().into_iter().map(h).collect::<Vec<_>>());
    let fmax = u0.values.iter().fold(0.0_f64, |m, &u| m.max(spec.flux.eval(u).abs()));
    let lhs = eps * hmax + 2.0 * fmax;
    let alpha_ratio = lhs / eps;
    let passes = lhs < eps;
    SmallnessReport { lhs, alpha_ratio, passes, c0_bound: if passes { h_inverse(alpha_ratio) } else { f64::INFINITY } }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRateReport {
    pub a_const: f64,
    pub b_const: f64,
    pub sup_fprime: f64,
    pub k_rate: f64,
    pub positive: bool,
}

/// Default slope bound `h^{-1}(3/4)`.
pub fn default_slope_bound() -> f64 {
    h_inverse(0.75)
}

/// Decay rate `K = eps / A^3 - (2 ell / pi)^2 sup|f'|` with
/// `A = max(sqrt(1 + c0^2), sqrt(1 + sup|u_I'|^2))` and `c0 = h^{-1}(3/4)`.
pub fn stability_rate(spec: &ProblemSpec, steady: &SteadyState) -> StabilityRateReport {
    stability_rate_with(spec, steady, default_slope_bound())
}

pub fn stability_rate_with(spec: &ProblemSpec, steady: &SteadyState, c0: f64) -> StabilityRateReport {
    let slope = sup(&steady.slope.values);
    let a_const = (1.0 + c0 * c0).sqrt().max((1.0 + slope * slope).sqrt());
    let b_const = a_const.powi(3);
    let (lo, hi) = spec.value_range();
    let sup_fprime = if spec.flux.is_linear() {
        0.0
    } else {
        let samples = 4096;
        (0..=samples)
            .map(|i| spec.flux.deriv(lo + (hi - lo) * i as f64 / samples as f64).abs())
            .fold(0.0_f64, f64::max)
    };
    let k_rate = spec.epsilon / b_const - (2.0 * spec.ell / std::f64::consts::PI).powi(2) * sup_fprime;
    StabilityRateReport { a_const, b_const, sup_fprime, k_rate, positive: k_rate > 0.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub t: f64,
    /// Interface location, NaN when the field has no sign change.
    pub xi: f64,
    pub sup_u: f64,
    pub sup_z: f64,
    /// L2 distance to the reference steady state, NaN without one.
    pub l2_dist: f64,
    pub monotone: i8,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub spec: ProblemSpec,
    pub discretization: Discretization,
    pub snapshots: Vec<GridField>,
    pub interface_track: Vec<(f64, f64)>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Trajectory {
    pub fn snapshot_at(&self, t: f64) -> Option<&GridField> {
        self.snapshots.iter().find(|s| s.time == t)
    }

    /// Interface at a snapshot time.
    pub fn xi_at(&self, t: f64) -> Option<f64> {
        self.snapshot_at(t).and_then(track_interface)
    }

    pub fn last(&self) -> &GridField {
        self.snapshots.last().expect("trajectory holds the initial snapshot")
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("time integration stopped at t = {}: {source}", .partial.diagnostics.last().map_or(0.0, |d| d.t))]
pub struct EvolveFailure {
    pub partial: Trajectory,
    #[source]
    pub source: Error,
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub disc: Discretization,
    pub warmup_steps: usize,
    /// Cap on the implicit step; `t_end / 500` when unset.
    pub dt_max: Option<f64>,
    pub growth: f64,
    pub max_retries: usize,
    pub newton: NewtonOptions,
    /// Steady state used for the `l2_dist` diagnostic.
    pub reference: Option<GridField>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            disc: Discretization::default(),
            warmup_steps: 10,
            dt_max: None,
            growth: 1.2,
            max_retries: 40,
            newton: NewtonOptions::default(),
            reference: None,
        }
    }
}

fn diagnose(field: &GridField, spec: &ProblemSpec, opts: &EvolveOptions, dt: f64) -> Diagnostic {
    Diagnostic {
        t: field.time,
        xi: track_interface(field).unwrap_or(f64::NAN),
        sup_u: field.sup_norm(),
        sup_z: sup(&z_field(field, spec, opts.disc.diffusion)),
        l2_dist: opts.reference.as_ref().map_or(f64::NAN, |r| field.l2_distance(r)),
        monotone: monotone_sign(field),
        dt,
    }
}

/// Integrates from `u0` to `t_end`, keeping snapshots at `t = 0` and at each
/// of `output_times`, and a diagnostic record after every step.
pub fn evolve(
    spec: &ProblemSpec,
    u0: &GridField,
    t_end: f64,
    output_times: &[f64],
    opts: &EvolveOptions,
) -> std::result::Result<Trajectory, Box<EvolveFailure>> {
    let mut traj = Trajectory {
        spec: *spec,
        discretization: opts.disc,
        snapshots: Vec::new(),
        interface_track: Vec::new(),
        diagnostics: Vec::new(),
    };
    let fail = |traj: Trajectory, source: Error| Box::new(EvolveFailure { partial: traj, source });
    if !(t_end > 0.0) {
        return Err(fail(traj, Error::InvalidSpec(format!("t_end must be positive, got {t_end}"))));
    }
    if u0.values.len() != u0.grid.len() {
        return Err(fail(traj, Error::InvalidSpec("initial field does not match its grid".into())));
    }
    let mut outputs: Vec<f64> = output_times.iter().copied().filter(|&t| t > 0.0 && t <= t_end).collect();
    outputs.sort_by(f64::total_cmp);
    outputs.dedup();

    let op = Operator::new(spec, &u0.grid, opts.disc);
    let mut state = u0.clone();
    state.time = 0.0;
    state.impose_boundary(spec);
    traj.snapshots.push(state.clone());
    let d0 = diagnose(&state, spec, opts, 0.0);
    if d0.xi.is_finite() {
        traj.interface_track.push((0.0, d0.xi));
    }
    traj.diagnostics.push(d0);

    let dt_max = opts.dt_max.unwrap_or(t_end / 500.0);
    let mut next_out = 0usize;
    let mut step_index = 0usize;
    let mut dt = op.explicit_cap(&state.values).min(dt_max);

    while state.time < t_end {
        let t = state.time;
        let target = outputs.get(next_out).copied().unwrap_or(t_end).min(t_end);
        let explicit = step_index < opts.warmup_steps;
        if explicit {
            dt = op.explicit_cap(&state.values).min(dt_max);
        }
        let mut retries = 0;
        let (values, dt_taken) = loop {
            let mut dt_eff = dt.min(target - t);
            let lands = dt_eff == target - t || t + dt_eff >= target;
            if lands {
                dt_eff = target - t;
            }
            let attempt = if explicit {
                explicit_step(&op, &state.values, dt_eff * (1.0 - 1e-12))
                    .or_else(|_| explicit_step(&op, &state.values, op.explicit_cap(&state.values)))
                    .map(|v| (v, dt_eff))
            } else {
                implicit_step(&op, &state.values, dt_eff, t, opts.newton).map(|v| (v, dt_eff))
            };
            match attempt {
                Ok(ok) => break ok,
                Err(e) => {
                    retries += 1;
                    if retries > opts.max_retries || explicit {
                        return Err(fail(traj, e));
                    }
                    dt *= 0.5;
                }
            }
        };
        let t_new = if (t + dt_taken - target).abs() <= 1e-12 * target.max(1.0) { target } else { t + dt_taken };
        state = GridField { grid: state.grid.clone(), values, time: t_new };
        state.impose_boundary(spec);
        step_index += 1;
        if !explicit {
            dt = (opts.growth * dt).min(dt_max);
        }
        let diag = diagnose(&state, spec, opts, dt_taken);
        if diag.xi.is_finite() {
            traj.interface_track.push((diag.t, diag.xi));
        }
        traj.diagnostics.push(diag);
        if state.time == target && next_out < outputs.len() && outputs[next_out] == target {
            traj.snapshots.push(state.clone());
            next_out += 1;
        }
        if !state.values.iter().all(|v| v.is_finite()) {
            return Err(fail(traj, Error::NewtonDivergence { time: state.time, dt: dt_taken, residual: f64::NAN }));
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Flux;
    use crate::steady;
    use approx::assert_relative_eq;

    fn burgers(eps: f64) -> ProblemSpec {
        ProblemSpec::burgers_decreasing(eps, 1.0, eps.sqrt()).unwrap()
    }

    #[test]
    fn h_and_inverse() {
        for s in [-3.0, -0.2, 0.0, 0.7, 5.0] {
            assert_relative_eq!(h_inverse(h(s)), s, max_relative = 1e-12, epsilon = 1e-15);
        }
        assert_relative_eq!(default_slope_bound(), 0.75 / (1.0f64 - 0.5625).sqrt(), max_relative = 1e-15);
        assert!((default_slope_bound() - 1.1339).abs() < 1e-4);
    }

    #[test]
    fn equilibria_of_the_operator() {
        let grid = Grid::new(1.0, 50).unwrap();
        let spec = ProblemSpec { epsilon: 0.1, ell: 1.0, u_minus: 0.0, u_plus: 0.0, flux: Flux::Burgers };
        let zero = GridField::from_fn(&grid, 0.0, |_| 0.0);
        assert!(spatial_operator(&zero, &spec).values.iter().all(|&v| v == 0.0));
        let spec = ProblemSpec::new(0.1, 1.0, -1.0, 2.0, Flux::Zero).unwrap();
        let lin = GridField::from_fn(&grid, 0.0, |x| 0.5 + 1.5 * x);
        assert!(sup(&spatial_operator(&lin, &spec).values) < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let spec = burgers(0.01);
        let grid = Grid::new(1.0, 20).unwrap();
        let u = GridField::from_fn(&grid, 0.0, |x| -0.1 * (8.0 * x).tanh() + 0.02 * x * x);
        for disc in [
            Discretization::default(),
            Discretization { diffusion: Diffusion::Linear, convection: Convection::Rusanov },
            Discretization { diffusion: Diffusion::MeanCurvature, convection: Convection::Rusanov },
        ] {
            let op = Operator::new(&spec, &grid, disc);
            let (_, jac) = op.linearize(&u.values);
            let m = jac.len();
            for j in 0..m {
                let hstep = 1e-7;
                let mut up = u.values.clone();
                let mut dn = u.values.clone();
                up[j + 1] += hstep;
                dn[j + 1] -= hstep;
                let (pp, _) = op.linearize(&up);
                let (pm, _) = op.linearize(&dn);
                for i in 0..m {
                    let fd = (pp[i] - pm[i]) / (2.0 * hstep);
                    let exact = if i == j {
                        jac.diag[i]
                    } else if i + 1 == j {
                        jac.upper[i]
                    } else if j + 1 == i {
                        jac.lower[j]
                    } else {
                        0.0
                    };
                    assert!((fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()), "{disc:?} ({i},{j}): {fd} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn steady_residual_is_second_order() {
        let spec = burgers(0.05);
        let mut prev = None;
        for n in [100usize, 200, 400, 800] {
            let grid = Grid::new(1.0, n).unwrap();
            let s = steady::steady_state(&spec, &grid).unwrap();
            let r = sup(&spatial_operator(&s.profile, &spec).values);
            if let Some(p) = prev {
                let ratio: f64 = p / r;
                assert!(ratio >= 3.5, "n = {n}: ratio {ratio}");
            }
            prev = Some(r);
        }
    }

    #[test]
    fn steady_z_is_constant() {
        let spec = burgers(0.02);
        let grid = Grid::new(1.0, 400).unwrap();
        let s = steady::steady_state(&spec, &grid).unwrap();
        let z = z_field(&s.profile, &spec, Diffusion::MeanCurvature);
        let dx2 = grid.spacing * grid.spacing;
        for v in z {
            assert!((v - s.c_const).abs() < 50.0 * dx2, "{v} vs {}", s.c_const);
        }
    }

    #[test]
    fn polished_steady_state_is_a_fixed_point() {
        let spec = burgers(0.05);
        let grid = Grid::new(1.0, 200).unwrap();
        let s = steady::steady_state(&spec, &grid).unwrap();
        let polished = discrete_steady_state(&spec, &s.profile, Discretization::default()).unwrap();
        assert!(polished.sup_distance(&s.profile) < 1e-3);
        for dt in [1e-3, 1.0, 1e3, 1e6] {
            let next = advance(&polished, dt, Scheme::ImplicitBdf1, &spec, Discretization::default()).unwrap();
            assert!(next.sup_distance(&polished) <= 1e-8, "dt {dt}: {}", next.sup_distance(&polished));
        }
        // the exact continuous profile only moves by the truncation error
        let next = advance(&s.profile, 1e3, Scheme::ImplicitBdf1, &spec, Discretization::default()).unwrap();
        assert!(next.sup_distance(&s.profile) < 1e-3);
    }

    #[test]
    fn explicit_and_implicit_agree_on_short_step() {
        let spec = burgers(0.01);
        let grid = Grid::new(1.0, 400).unwrap();
        let eps: f64 = 0.01;
        let u0 = GridField::initial(&spec, &grid, |x| eps.sqrt() * (0.5 * x * x - x - 0.5));
        let dt = 1e-4;
        let a = advance(&u0, dt, Scheme::ExplicitRk4, &spec, Discretization::default()).unwrap();
        let b = advance(&u0, dt, Scheme::ImplicitBdf1, &spec, Discretization::default()).unwrap();
        assert!(a.sup_distance(&b) <= 1e-6);
        assert!(a.satisfies_boundary(&spec) && b.satisfies_boundary(&spec));
    }

    #[test]
    fn explicit_step_rejects_large_dt() {
        let spec = burgers(0.01);
        let grid = Grid::new(1.0, 400).unwrap();
        let u0 = GridField::initial(&spec, &grid, |x| -0.1 * x);
        let r = advance(&u0, 1e-2, Scheme::ExplicitRk4, &spec, Discretization::default());
        assert!(matches!(r, Err(Error::ExplicitCflViolation { .. })));
    }

    #[test]
    fn interface_positions() {
        let grid = Grid::new(1.0, 400).unwrap();
        let f = GridField::from_fn(&grid, 0.0, |x| -x);
        assert_eq!(interface_position(&f).unwrap(), 0.0);
        let f = GridField::from_fn(&grid, 0.0, |x| -x + 0.25);
        assert!((interface_position(&f).unwrap() - 0.25).abs() < 1e-12);
        let f = GridField::from_fn(&grid, 0.0, |x| x * x + 0.1);
        assert!(matches!(interface_position(&f), Err(Error::NoCrossing)));
        let f = GridField::from_fn(&grid, 0.0, |x| (3.0 * std::f64::consts::PI * x).sin());
        assert!(matches!(interface_position(&f), Err(Error::MultipleCrossings(k)) if k >= 5));
        // steep drop at x = -0.5 plus a gentle return through zero near x = 0.5
        let f = GridField::from_fn(&grid, 0.0, |x| if x < -0.5 { -1.0 } else { 0.1 - 0.2 * x });
        assert!(matches!(interface_position(&f), Err(Error::MultipleCrossings(2))));
        assert!((track_interface(&f).unwrap() + 0.5).abs() <= grid.spacing);
    }

    #[test]
    fn smallness_reports() {
        let spec = burgers(0.005);
        let grid = Grid::new(1.0, 100).unwrap();
        let zero = GridField::from_fn(&grid, 0.0, |_| 0.0);
        let r = check_smallness(&zero, &spec);
        assert_eq!(r.lhs, 0.0);
        assert!(r.passes);
        let big = GridField::from_fn(&grid, 0.0, |_| 0.1);
        let r = check_smallness(&big, &spec);
        assert!(!r.passes && r.lhs >= 2.0 * spec.epsilon);
    }

    #[test]
    fn smallness_of_table_datum_matches_dense_evaluation() {
        let eps: f64 = 0.005;
        let spec = burgers(eps);
        let u0 = |x: f64| eps.sqrt() * (0.5 * x * x - x - 0.5);
        let grid = Grid::new(1.0, 100_000).unwrap();
        let r = check_smallness(&GridField::from_fn(&grid, 0.0, u0), &spec);
        // slope is largest at x = -1 (|u0'| = 2 sqrt(eps)); |f(u0)| at x = -1 equals eps/2
        let expected = eps * h(2.0 * eps.sqrt()) + eps;
        assert_relative_eq!(r.lhs, expected, max_relative = 1e-4);
        assert!(!r.passes);
    }

    #[test]
    fn stability_rates() {
        let eps = 0.1;
        let spec = ProblemSpec::burgers_decreasing(eps, 1.0, eps / 2.0).unwrap();
        let grid = Grid::new(1.0, 200).unwrap();
        let s = steady::steady_state(&spec, &grid).unwrap();
        let r = stability_rate(&spec, &s);
        assert!(r.positive, "{r:?}");
        assert_relative_eq!(r.b_const, r.a_const.powi(3));
        let spec = burgers(0.005);
        let s = steady::steady_state(&spec, &grid).unwrap();
        assert!(!stability_rate(&spec, &s).positive);
        let lin = ProblemSpec::new(0.01, 1.0, 0.1, -0.1, Flux::Linear { speed: 0.02 }).unwrap();
        let s = steady::steady_state(&lin, &grid).unwrap();
        let r = stability_rate(&lin, &s);
        assert_relative_eq!(r.k_rate, 0.01 / r.b_const);
        // gentle profile: A is set by the slope bound
        let slope_max = sup(&s.slope.values);
        if slope_max < 1.0 / 3f64.sqrt() {
            assert_relative_eq!(r.a_const, (1.0 + default_slope_bound().powi(2)).sqrt());
        }
    }

    #[test]
    fn steady_start_stays_put() {
        let spec = burgers(0.05);
        let grid = Grid::new(1.0, 200).unwrap();
        let s = steady::steady_state(&spec, &grid).unwrap();
        let traj = evolve(&spec, &s.profile, 1e3, &[1.0, 10.0, 100.0, 1e3], &EvolveOptions::default()).unwrap();
        for &(_, xi) in &traj.interface_track {
            assert!(xi.abs() < 1e-6);
        }
        assert_eq!(traj.snapshots.len(), 5);
        assert!(traj.snapshots.iter().all(|s| s.satisfies_boundary(&spec)));
        for w in traj.diagnostics.windows(2) {
            assert!(w[1].t > w[0].t);
        }
    }
}
