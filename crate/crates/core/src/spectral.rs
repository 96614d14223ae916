//! Linearization around a family element and its Sturm-Liouville spectrum.
//!
//! Around a profile `U` the linearized operator is
//! `L v = p v'' + q v' + r v` with
//!
//! ```text
//! p = eps / (1 + U_x^2)^(3/2)
//! q = -3 eps U_xx U_x / (1 + U_x^2)^(5/2) - f'(U)
//! r = -(f'(U))_x
//! ```
//!
//! and `rho L v = (rho p v')' + rho r v` for the weight
//! `rho = exp(-(1/eps) int_0^x a)`, `a = f'(U) (1 + U_x^2)^(3/2)`.
//! `L (1/rho) = 0` identically; the discretization keeps this exactly, so the
//! exponentially small first eigenvalue is not buried under truncation error.
//!
//! Discretely, with `l = ln rho` and unknowns at interior nodes, the
//! symmetric matrix `B = M^(-1/2) A M^(-1/2)` (mass `M = diag(rho dx)`) has
//!
//! ```text
//! B[i][i+1] = p_{i+1/2} / dx^2
//! B[i][i]   = -(p_{i+1/2} e^{(l_i - l_{i+1})/2} + p_{i-1/2} e^{(l_i - l_{i-1})/2}) / dx^2
//! ```
//!
//! where the face weights are geometric means of `rho` and the zeroth-order
//! term is chosen as the discrete divergence that makes `e^{-l}` an exact
//! null vector away from the boundary.

use serde::{Deserialize, Serialize};

use crate::eigen::SymTridiagonal;
use crate::error::{Error, Result};
use crate::family::{self, FamilyElement};
use crate::problem::{Grid, GridField, ProblemSpec};

/// Default number of eigenpairs.
pub const DEFAULT_EIGEN_COUNT: usize = 6;

/// Coefficients of the linearization on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizedCoefficients {
    pub epsilon: f64,
    pub xi: f64,
    pub p: GridField,
    pub q: GridField,
    /// `-(f'(U))_x` in the form that keeps `1/rho` in the discrete kernel.
    pub r: GridField,
    /// `rho`, normalized to 1 at `x = 0`; may underflow for small `eps`.
    pub rho: GridField,
    /// `ln rho`, always finite.
    pub log_rho: Vec<f64>,
    pub a_field: GridField,
    /// `p` at the faces `i + 1/2` (harmonic means).
    pub p_face: Vec<f64>,
}

/// Eigenpairs of the linearization with their asymptotic predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub xi: f64,
    pub epsilon: f64,
    /// Decreasing.
    pub eigenvalues: Vec<f64>,
    /// `rho`-orthonormal: `sum rho_i phi_i psi_i dx = delta`.
    pub eigenfunctions: Vec<GridField>,
    pub lambda1_predicted: Option<f64>,
    pub lambda2_bound: Option<f64>,
    pub all_negative: bool,
}

/// Which closed-form eigenfunction of the hyperbolic limit to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eigenfunction {
    Psi1,
    Psi2,
}

fn derivatives(u: &GridField) -> (Vec<f64>, Vec<f64>) {
    let v = &u.values;
    let n = v.len() - 1;
    let dx = u.grid.spacing;
    let mut ux = vec![0.0; n + 1];
    let mut uxx = vec![0.0; n + 1];
    for i in 1..n {
        ux[i] = (v[i + 1] - v[i - 1]) / (2.0 * dx);
        uxx[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (dx * dx);
    }
    if n >= 3 {
        ux[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx);
        ux[n] = (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * dx);
        uxx[0] = 2.0 * uxx[1] - uxx[2];
        uxx[n] = 2.0 * uxx[n - 1] - uxx[n - 2];
    } else {
        ux[0] = (v[1] - v[0]) / dx;
        ux[n] = (v[n] - v[n - 1]) / dx;
    }
    (ux, uxx)
}

/// Linearization around a smoothed family element.
pub fn assemble(element: &FamilyElement, spec: &ProblemSpec) -> Result<LinearizedCoefficients> {
    if element.smoothing_width <= 0.0 {
        return Err(Error::NonSmoothProfile);
    }
    let mut c = assemble_profile(&element.profile, spec)?;
    c.xi = element.xi;
    Ok(c)
}

/// Linearization around an arbitrary sampled profile (no smoothness check).
pub fn assemble_profile(profile: &GridField, spec: &ProblemSpec) -> Result<LinearizedCoefficients> {
    let grid = &profile.grid;
    let n = grid.n_cells;
    if n < 4 {
        return Err(Error::InvalidSpec(format!("need at least 4 cells, got {n}")));
    }
    let eps = spec.epsilon;
    let dx = grid.spacing;
    let (ux, uxx) = derivatives(profile);
    let u = &profile.values;
    let mut p = vec![0.0; n + 1];
    let mut q = vec![0.0; n + 1];
    let mut a = vec![0.0; n + 1];
    for i in 0..=n {
        let g = 1.0 + ux[i] * ux[i];
        p[i] = eps / g.powf(1.5);
        q[i] = -3.0 * eps * uxx[i] * ux[i] / g.powf(2.5) - spec.flux.deriv(u[i]);
        a[i] = spec.flux.deriv(u[i]) * g.powf(1.5);
    }
    // ln rho by the trapezoid rule, anchored at x = 0
    let mut l = vec![0.0; n + 1];
    for i in 1..=n {
        l[i] = l[i - 1] - 0.5 * dx * (a[i - 1] + a[i]) / eps;
    }
    let anchor = GridField { grid: grid.clone(), values: l.clone(), time: 0.0 }.interpolate(0.0);
    for v in &mut l {
        *v -= anchor;
    }
    let p_face: Vec<f64> = (0..n).map(|i| 2.0 * p[i] * p[i + 1] / (p[i] + p[i + 1])).collect();
    // r_i = -(G_{i+1/2} - G_{i-1/2}) / dx with G = -2 p_f sinh(dl / 2) / dx
    let face_g: Vec<f64> = (0..n).map(|i| -2.0 * p_face[i] * (0.5 * (l[i + 1] - l[i])).sinh() / dx).collect();
    let mut r = vec![0.0; n + 1];
    for i in 1..n {
        r[i] = -(face_g[i] - face_g[i - 1]) / dx;
    }
    r[0] = 2.0 * r[1] - r[2];
    r[n] = 2.0 * r[n - 1] - r[n - 2];
    let field = |values: Vec<f64>| GridField { grid: grid.clone(), values, time: profile.time };
    Ok(LinearizedCoefficients {
        epsilon: eps,
        xi: f64::NAN,
        p: field(p),
        q: field(q),
        r: field(r),
        rho: field(l.iter().map(|v| v.exp()).collect()),
        log_rho: l,
        a_field: field(a),
        p_face,
    })
}

/// The symmetrized operator `B` on the interior nodes.
pub fn symmetric_operator(coeffs: &LinearizedCoefficients) -> SymTridiagonal {
    let n = coeffs.p.grid.n_cells;
    let dx2 = coeffs.p.grid.spacing.powi(2);
    let l = &coeffs.log_rho;
    let pf = &coeffs.p_face;
    let diag = (1..n)
        .map(|i| -(pf[i] * (0.5 * (l[i] - l[i + 1])).exp() + pf[i - 1] * (0.5 * (l[i] - l[i - 1])).exp()) / dx2)
        .collect();
    let off = (1..n - 1).map(|i| pf[i] / dx2).collect();
    SymTridiagonal { diag, off }
}

/// The `k` largest eigenpairs of `(rho p v')' + rho r v = lambda rho v`
/// with Dirichlet conditions.
pub fn eigenpairs(coeffs: &LinearizedCoefficients, k: usize) -> Result<SpectralReport> {
    let grid = &coeffs.p.grid;
    let n = grid.n_cells;
    if k == 0 || k > n / 4 {
        return Err(Error::InvalidSpec(format!("eigen count must be in 1..={}, got {k}", n / 4)));
    }
    let b = symmetric_operator(coeffs);
    let pairs = b.largest(k)?;
    let scale = 1.0 / grid.spacing.sqrt();
    let eigenfunctions = pairs
        .vectors
        .iter()
        .map(|y| {
            let mut values = vec![0.0; n + 1];
            for i in 1..n {
                values[i] = y[i - 1] * (-0.5 * coeffs.log_rho[i]).exp() * scale;
            }
            // fix the sign: positive where the magnitude is largest
            let (imax, _) = values.iter().enumerate().fold((0, 0.0), |acc, (i, v)| {
                if v.abs() > acc.1 {
                    (i, v.abs())
                } else {
                    acc
                }
            });
            if values[imax] < 0.0 {
                for v in &mut values {
                    *v = -*v;
                }
            }
            GridField { grid: grid.clone(), values, time: 0.0 }
        })
        .collect();
    let all_negative = pairs.values.iter().all(|&v| v < 0.0);
    Ok(SpectralReport {
        xi: coeffs.xi,
        epsilon: coeffs.epsilon,
        eigenvalues: pairs.values,
        eigenfunctions,
        lambda1_predicted: None,
        lambda2_bound: None,
        all_negative,
    })
}

/// Builds the element at `xi`, linearizes and reports the spectrum together
/// with the closed-form predictions (symmetric Burgers data only).
pub fn spectrum(xi: f64, spec: &ProblemSpec, grid: &Grid, k: usize) -> Result<SpectralReport> {
    let element = family::build_element(xi, spec, grid, family::default_smoothing(grid))?;
    let coeffs = assemble(&element, spec)?;
    let mut report = eigenpairs(&coeffs, k)?;
    report.lambda1_predicted = lambda1_asymptotic(xi, spec).ok();
    report.lambda2_bound = lambda2_bound(spec).ok();
    Ok(report)
}

/// `rho`-weighted inner product on the grid (trapezoid; the Dirichlet
/// fields vanish at the ends).
pub fn weighted_inner(coeffs: &LinearizedCoefficients, a: &[f64], b: &[f64]) -> f64 {
    let dx = coeffs.p.grid.spacing;
    let n = a.len() - 1;
    let mut s = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        s += w * coeffs.log_rho[i].exp() * a[i] * b[i];
    }
    s * dx
}

fn symmetric_amplitude(spec: &ProblemSpec) -> Result<f64> {
    if !spec.is_symmetric_burgers() {
        return Err(Error::UnsupportedConfiguration(format!(
            "closed form needs the Burgers flux with u- = -u+ > 0, got {} with u- = {}, u+ = {}",
            spec.flux.label(),
            spec.u_minus,
            spec.u_plus
        )));
    }
    Ok(spec.u_minus)
}

/// `-u*^3 / eps * exp(-u* (ell - |xi|) / eps)`.
pub fn lambda1_asymptotic(xi: f64, spec: &ProblemSpec) -> Result<f64> {
    let u = symmetric_amplitude(spec)?;
    let eps = spec.epsilon;
    Ok(-u.powi(3) / eps * (-u * (spec.ell - xi.abs()) / eps).exp())
}

/// `-u*^2 / (4 eps)`, below which every eigenvalue after the first lies.
pub fn lambda2_bound(spec: &ProblemSpec) -> Result<f64> {
    let u = symmetric_amplitude(spec)?;
    Ok(-u * u / (4.0 * spec.epsilon))
}

/// First eigenvalue of the linear-diffusion problem `u_t = eps u_xx - f(u)_x`:
///
/// ```text
/// -(1/eps) (1/f'(u-) - 1/f'(u+))^(-1)
///     (-f'(u+) e^{f'(u+)(ell - xi)/eps} + f'(u-) e^{-f'(u-)(ell + xi)/eps})
/// ```
pub fn linear_reference_lambda1(xi: f64, spec: &ProblemSpec) -> Result<f64> {
    let am = spec.flux.deriv(spec.u_minus);
    let ap = spec.flux.deriv(spec.u_plus);
    if am == 0.0 || ap == 0.0 || am == ap {
        return Err(Error::UnsupportedConfiguration(format!(
            "needs distinct nonzero characteristic speeds, got f'(u-) = {am}, f'(u+) = {ap}"
        )));
    }
    let (eps, ell) = (spec.epsilon, spec.ell);
    let bracket = -ap * (ap * (ell - xi) / eps).exp() + am * (-am * (ell + xi) / eps).exp();
    Ok(-bracket / (eps * (1.0 / am - 1.0 / ap)))
}

/// Closed-form eigenfunctions of the hyperbolic limit of the adjoint
/// operator. `Psi2` needs `lambda2` with `-4 eps lambda2 - u*^2 >= 0`.
pub fn hyperbolic_eigenfunctions(
    x: f64,
    xi: f64,
    spec: &ProblemSpec,
    which: Eigenfunction,
    lambda2: Option<f64>,
) -> Result<f64> {
    let u = symmetric_amplitude(spec)?;
    match which {
        Eigenfunction::Psi1 => family::psi1_hyperbolic(x, xi, spec),
        Eigenfunction::Psi2 => {
            let lambda2 = lambda2.ok_or_else(|| Error::DomainError("the second eigenfunction needs lambda2".into()))?;
            let eps = spec.epsilon;
            let ell = spec.ell;
            let radicand = -4.0 * eps * lambda2 - u * u;
            if radicand < 0.0 {
                return Err(Error::DomainError(format!(
                    "-4 eps lambda2 - u*^2 = {radicand} < 0 for lambda2 = {lambda2}"
                )));
            }
            let k = radicand.sqrt();
            let branch = |z: f64, sign: f64| (sign * u * z / (2.0 * eps)).exp() * (k * z / (2.0 * eps)).sin();
            // each side is scaled by the other side's value at xi, so the
            // two branches meet at the interface
            let c_minus = branch(xi - ell, 1.0);
            let c_plus = branch(xi + ell, -1.0);
            Ok(if x <= xi { c_minus * branch(x + ell, -1.0) } else { c_plus * branch(x - ell, 1.0) })
        }
    }
}
