//! Problem definition shared by every other module: the flux, the boundary
//! value problem on `(-ell, ell)`, uniform grids, sampled fields, and the
//! existence gate for monotone steady states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots;

/// Convection flux `f`, normalized so that `f(0) = 0`.
///
/// Only closed-form fluxes are supported; each variant knows its first and
/// second derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flux {
    /// `f = 0`.
    Zero,
    /// `f(u) = u^2 / 2`.
    Burgers,
    /// `f(u) = (u + shift)^2 / 2 - shift^2 / 2`. The constant is dropped so
    /// that `f(0) = 0`; it does not enter the conservation law.
    ShiftedBurgers { shift: f64 },
    /// `f(u) = speed * u`.
    Linear { speed: f64 },
    /// `f(u) = u^3 - u`.
    Cubic,
}

impl Flux {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Flux::Zero => 0.0,
            Flux::Burgers => 0.5 * u * u,
            Flux::ShiftedBurgers { shift } => 0.5 * u * u + shift * u,
            Flux::Linear { speed } => speed * u,
            Flux::Cubic => u * u * u - u,
        }
    }

    #[inline]
    pub fn deriv(&self, u: f64) -> f64 {
        match *self {
            Flux::Zero => 0.0,
            Flux::Burgers => u,
            Flux::ShiftedBurgers { shift } => u + shift,
            Flux::Linear { speed } => speed,
            Flux::Cubic => 3.0 * u * u - 1.0,
        }
    }

    #[inline]
    pub fn second_deriv(&self, u: f64) -> f64 {
        match *self {
            Flux::Zero | Flux::Linear { .. } => 0.0,
            Flux::Burgers | Flux::ShiftedBurgers { .. } => 1.0,
            Flux::Cubic => 6.0 * u,
        }
    }

    /// `f(a) - f(a - delta)`, evaluated without cancellation for small `delta`.
    #[inline]
    pub fn drop(&self, a: f64, delta: f64) -> f64 {
        match *self {
            Flux::Zero => 0.0,
            Flux::Burgers => delta * (a - 0.5 * delta),
            Flux::ShiftedBurgers { shift } => delta * (a + shift - 0.5 * delta),
            Flux::Linear { speed } => speed * delta,
            Flux::Cubic => delta * (3.0 * a * a - 3.0 * a * delta + delta * delta - 1.0),
        }
    }

    /// Uniform lower bound `c0` on `f''`, when the flux is uniformly convex.
    pub fn convexity_floor(&self) -> Option<f64> {
        match self {
            Flux::Burgers | Flux::ShiftedBurgers { .. } => Some(1.0),
            _ => None,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Flux::Zero | Flux::Linear { .. })
    }

    pub fn label(&self) -> String {
        match self {
            Flux::Zero => "zero".into(),
            Flux::Burgers => "burgers".into(),
            Flux::ShiftedBurgers { shift } => format!("shifted_burgers({shift})"),
            Flux::Linear { speed } => format!("linear({speed})"),
            Flux::Cubic => "cubic".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Increasing => 1.0,
            Direction::Decreasing => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Increasing => "increasing",
            Direction::Decreasing => "decreasing",
        }
    }
}

/// Parameters of the Dirichlet problem
/// `u_t = eps (u_x / sqrt(1 + u_x^2))_x - f(u)_x` on `(-ell, ell)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub epsilon: f64,
    pub ell: f64,
    pub u_minus: f64,
    pub u_plus: f64,
    pub flux: Flux,
}

impl ProblemSpec {
    pub fn new(epsilon: f64, ell: f64, u_minus: f64, u_plus: f64, flux: Flux) -> Result<Self> {
        let spec = ProblemSpec { epsilon, ell, u_minus, u_plus, flux };
        spec.validate()?;
        Ok(spec)
    }

    /// Burgers flux with `u(-ell) = u_star`, `u(ell) = -u_star`.
    pub fn burgers_decreasing(epsilon: f64, ell: f64, u_star: f64) -> Result<Self> {
        Self::new(epsilon, ell, u_star, -u_star, Flux::Burgers)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidSpec(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.ell > 0.0 && self.ell.is_finite()) {
            return Err(Error::InvalidSpec(format!("ell must be positive, got {}", self.ell)));
        }
        if !(self.u_minus.is_finite() && self.u_plus.is_finite()) {
            return Err(Error::InvalidSpec("boundary values must be finite".into()));
        }
        if self.u_minus == self.u_plus {
            return Err(Error::InvalidSpec("boundary values must differ".into()));
        }
        if let Flux::ShiftedBurgers { shift } | Flux::Linear { speed: shift } = self.flux {
            if !shift.is_finite() {
                return Err(Error::InvalidSpec("flux parameter must be finite".into()));
            }
        }
        Ok(())
    }

    /// Monotonicity forced by the boundary ordering.
    pub fn direction(&self) -> Direction {
        if self.u_minus < self.u_plus {
            Direction::Increasing
        } else {
            Direction::Decreasing
        }
    }

    /// Boundary values ordered as `(min, max)`.
    pub fn value_range(&self) -> (f64, f64) {
        (self.u_minus.min(self.u_plus), self.u_minus.max(self.u_plus))
    }

    /// `u_star` of a symmetric configuration `u(-ell) = u_star = -u(ell)`, if
    /// the boundary data have that form.
    pub fn symmetric_amplitude(&self) -> Option<f64> {
        (self.u_minus == -self.u_plus).then_some(self.u_minus)
    }

    pub fn is_symmetric_burgers(&self) -> bool {
        self.flux == Flux::Burgers && self.symmetric_amplitude().is_some_and(|u| u > 0.0)
    }
}

/// Uniform grid on `[-ell, ell]` with `n_cells + 1` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n_cells: usize,
    pub ell: f64,
    pub spacing: f64,
    pub nodes: Vec<f64>,
}

impl Grid {
    pub const DEFAULT_CELLS: usize = 400;

    pub fn new(ell: f64, n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::InvalidSpec(format!("grid needs at least 2 cells, got {n_cells}")));
        }
        if !(ell > 0.0 && ell.is_finite()) {
            return Err(Error::InvalidSpec(format!("ell must be positive, got {ell}")));
        }
        let spacing = 2.0 * ell / n_cells as f64;
        let mut nodes: Vec<f64> = (0..=n_cells).map(|i| -ell + i as f64 * spacing).collect();
        nodes[0] = -ell;
        nodes[n_cells] = ell;
        Ok(Grid { n_cells, ell, spacing, nodes })
    }

    pub fn for_spec(spec: &ProblemSpec, n_cells: usize) -> Result<Self> {
        Self::new(spec.ell, n_cells)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the node closest to `x`.
    pub fn nearest_node(&self, x: f64) -> usize {
        let i = ((x + self.ell) / self.spacing).round();
        (i.max(0.0) as usize).min(self.n_cells)
    }
}

/// A function sampled at the nodes of a [`Grid`], stamped with a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidSpec(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridField { grid, values, time })
    }

    pub fn from_fn(grid: &Grid, time: f64, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes.iter().map(|&x| f(x)).collect();
        GridField { grid: grid.clone(), values, time }
    }

    /// Initial datum with the boundary values of `spec` imposed exactly.
    pub fn initial(spec: &ProblemSpec, grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        let mut field = Self::from_fn(grid, 0.0, f);
        field.impose_boundary(spec);
        field
    }

    pub fn impose_boundary(&mut self, spec: &ProblemSpec) {
        let n = self.values.len() - 1;
        self.values[0] = spec.u_minus;
        self.values[n] = spec.u_plus;
    }

    pub fn satisfies_boundary(&self, spec: &ProblemSpec) -> bool {
        self.values[0] == spec.u_minus && self.values[self.values.len() - 1] == spec.u_plus
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &GridField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Discrete L2 distance with trapezoid weights.
    pub fn l2_distance(&self, other: &GridField) -> f64 {
        let dx = self.grid.spacing;
        let n = self.values.len() - 1;
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(i, (a, b))| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * (a - b) * (a - b)
            })
            .sum();
        (sum * dx).sqrt()
    }

    /// Forward differences `(u[i+1] - u[i]) / dx`.
    pub fn face_slopes(&self) -> Vec<f64> {
        let dx = self.grid.spacing;
        self.values.windows(2).map(|w| (w[1] - w[0]) / dx).collect()
    }

    /// Linear interpolation at `x` (clamped to the grid).
    pub fn interpolate(&self, x: f64) -> f64 {
        let g = &self.grid;
        let s = ((x + g.ell) / g.spacing).clamp(0.0, g.n_cells as f64);
        let i = (s.floor() as usize).min(g.n_cells - 1);
        let t = s - i as f64;
        (1.0 - t) * self.values[i] + t * self.values[i + 1]
    }
}

/// Outcome of the existence test for a monotone steady state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub m: f64,
    pub big_m: f64,
    pub gap_ok: bool,
    /// Length threshold `c_I` or `c_D`; infinite when the gap condition fails.
    pub c_threshold: f64,
    pub length_ok: bool,
    pub direction: Direction,
}

impl ExistenceReport {
    pub fn exists(&self) -> bool {
        self.gap_ok && self.length_ok
    }
}

const EXTREMA_SAMPLES: usize = 4096;

/// Extremal values of the flux over an interval together with where they
/// are attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxExtrema {
    pub m: f64,
    pub big_m: f64,
    pub arg_m: f64,
    pub arg_big_m: f64,
}

/// Minimum and maximum of `f` over the closed interval between `a` and `b`.
///
/// Dense sampling followed by bisection refinement of every sign change of
/// `f'` between consecutive samples.
pub fn extrema_detail(flux: &Flux, a: f64, b: f64) -> FluxExtrema {
    let (lo, hi) = (a.min(b), a.max(b));
    let mut ext = FluxExtrema { m: f64::INFINITY, big_m: f64::NEG_INFINITY, arg_m: lo, arg_big_m: lo };
    let visit = |x: f64, ext: &mut FluxExtrema| {
        let v = flux.eval(x);
        if v < ext.m {
            ext.m = v;
            ext.arg_m = x;
        }
        if v > ext.big_m {
            ext.big_m = v;
            ext.arg_big_m = x;
        }
    };
    visit(lo, &mut ext);
    visit(hi, &mut ext);
    if hi == lo {
        return ext;
    }
    let h = (hi - lo) / EXTREMA_SAMPLES as f64;
    let mut prev_x = lo;
    let mut prev_d = flux.deriv(lo);
    for i in 1..=EXTREMA_SAMPLES {
        let x = if i == EXTREMA_SAMPLES { hi } else { lo + i as f64 * h };
        visit(x, &mut ext);
        let d = flux.deriv(x);
        if prev_d * d < 0.0 {
            let crit = roots::bisect(|s| flux.deriv(s), prev_x, x, 1e-12);
            visit(crit, &mut ext);
        }
        prev_x = x;
        prev_d = d;
    }
    ext
}

pub fn extrema_on(flux: &Flux, a: f64, b: f64) -> (f64, f64) {
    let e = extrema_detail(flux, a, b);
    (e.m, e.big_m)
}

/// `(m, M)`: extrema of the flux over the boundary-value interval.
pub fn flux_extrema(spec: &ProblemSpec) -> (f64, f64) {
    extrema_on(&spec.flux, spec.u_minus, spec.u_plus)
}

/// Checks the two conditions for a unique monotone steady state: the flux
/// oscillation `M - m` stays below `eps` and the domain is longer than the
/// threshold `c_I` (increasing) or `c_D` (decreasing).
pub fn check_existence(spec: &ProblemSpec, direction: Direction) -> Result<ExistenceReport> {
    if direction != spec.direction() {
        return Err(Error::DirectionMismatch {
            requested: direction,
            u_minus: spec.u_minus,
            u_plus: spec.u_plus,
        });
    }
    let (m, big_m) = flux_extrema(spec);
    let gap_ok = big_m - m < spec.epsilon;
    let c_threshold = if gap_ok { crate::steady::threshold(spec, direction)? } else { f64::INFINITY };
    let length_ok = 2.0 * spec.ell > c_threshold;
    Ok(ExistenceReport { m, big_m, gap_ok, c_threshold, length_ok, direction })
}
