//! Steady states, long-time dynamics and metastable shock layers for
//!
//! ```text
//! u_t = eps (u_x / sqrt(1 + u_x^2))_x - f(u)_x,   x in (-ell, ell),
//! u(-ell) = u-,  u(ell) = u+.
//! ```
//!
//! Modules:
//! - [`problem`]: flux, problem parameters, grids, existence gate.
//! - [`steady`]: integration constant and exact monotone steady states.
//! - [`evolve`]: finite-volume time stepping, interface tracking, monitors.
//! - [`family`]: approximate steady states glued at an interface, the
//!   reduced interface equation.
//! - [`spectral`]: linearized Sturm-Liouville operator and its eigenpairs.
//! - [`experiments`]: the standard setups used by the CLI and test suites.

pub mod config;
pub mod eigen;
pub mod error;
pub mod evolve;
pub mod experiments;
pub mod family;
pub mod problem;
pub mod quadrature;
pub mod roots;
pub mod spectral;
pub mod steady;
pub mod tridiag;

pub use error::{Error, Result};
pub use problem::{check_existence, flux_extrema, Direction, ExistenceReport, Flux, Grid, GridField, ProblemSpec};
