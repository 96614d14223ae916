//! Standard setups: the table runs, the figure runs and their initial data.

use crate::error::Result;
use crate::evolve::{Convection, Diffusion, Discretization, EvolveOptions};
use crate::problem::{Flux, Grid, GridField, ProblemSpec};

/// Output times of the interface tables.
pub const TABLE_TIMES: [f64; 8] = [10.0, 1e2, 1e3, 5e3, 1e4, 5e4, 1e5, 1e6];

/// Diffusion values of the interface tables.
pub const TABLE_EPSILONS: [f64; 3] = [0.03, 0.01, 0.005];

/// Start of the averaging window for the interface speed.
pub const SPEED_WINDOW_START: f64 = 100.0;

/// The interface counts as arrived once `|xi|` drops to this value.
pub const SPEED_STOP_THRESHOLD: f64 = 0.05;

/// Burgers flux, `u(-1) = sqrt(eps)`, `u(1) = -sqrt(eps)`.
pub fn table_spec(epsilon: f64) -> Result<ProblemSpec> {
    ProblemSpec::burgers_decreasing(epsilon, 1.0, epsilon.sqrt())
}

/// `sqrt(eps) (x^2/2 - x - 1/2)`: decreasing, with a zero at `1 - sqrt(2)`.
pub fn table_datum(epsilon: f64) -> impl Fn(f64) -> f64 {
    let a = epsilon.sqrt();
    move |x| a * (0.5 * x * x - x - 0.5)
}

pub fn table_initial(epsilon: f64, grid: &Grid) -> Result<GridField> {
    let spec = table_spec(epsilon)?;
    Ok(GridField::initial(&spec, grid, table_datum(epsilon)))
}

/// Which diffusion a table run uses.
pub fn table_discretization(linear_diffusion: bool) -> Discretization {
    Discretization {
        diffusion: if linear_diffusion { Diffusion::Linear } else { Diffusion::MeanCurvature },
        convection: Convection::Central,
    }
}

pub fn table_options(linear_diffusion: bool) -> EvolveOptions {
    EvolveOptions { disc: table_discretization(linear_diffusion), ..EvolveOptions::default() }
}

/// `sqrt(eps) exp(-1/sqrt(eps))`, the predicted interface speed scale.
pub fn speed_predictor(epsilon: f64) -> f64 {
    epsilon.sqrt() * (-1.0 / epsilon.sqrt()).exp()
}

/// `(f(u) + shifted)` flux of the asymmetric experiment: `(u + a sqrt(eps))^2 / 2`
/// up to an additive constant.
pub fn shifted_flux(epsilon: f64, a: f64) -> Flux {
    Flux::ShiftedBurgers { shift: a * epsilon.sqrt() }
}

/// Characteristic function of `[a, b)`.
fn chi(x: f64, a: f64, b: f64) -> f64 {
    if x >= a && x < b {
        1.0
    } else {
        0.0
    }
}

/// One simulation of a figure: problem, initial datum, output times.
#[derive(Debug, Clone)]
pub struct FigureRun {
    pub name: String,
    pub spec: ProblemSpec,
    pub initial: GridField,
    pub times: Vec<f64>,
    pub options: EvolveOptions,
}

/// Identifiers accepted by [`figure_runs`].
pub const FIGURE_IDS: [&str; 7] = ["3", "4", "5", "6", "7", "8", "9"];

/// The runs behind a figure id. See the README for what each figure shows.
pub fn figure_runs(id: &str, n_cells: usize) -> Result<Vec<FigureRun>> {
    let grid = Grid::new(1.0, n_cells)?;
    let mut runs = Vec::new();
    let mut push = |name: &str, spec: ProblemSpec, u0: &dyn Fn(f64) -> f64, times: Vec<f64>, options: EvolveOptions| {
        runs.push(FigureRun {
            name: name.to_string(),
            spec,
            initial: GridField::initial(&spec, &grid, u0),
            times,
            options,
        });
    };
    let standard = EvolveOptions::default;
    match id {
        "3" => {
            let eps: f64 = 0.005;
            let a = eps.sqrt();
            let inc = ProblemSpec::new(eps, 1.0, -a, a, Flux::Burgers)?;
            push("increasing", inc, &|x| a * (-0.5 * x * x + x + 0.5), vec![1.0, 10.0, 50.0, 100.0], standard());
            push("decreasing", table_spec(eps)?, &table_datum(eps), vec![1.0, 10.0, 100.0, 1e3, 1e4, 1e5], standard());
        }
        "4" => {
            let eps: f64 = 0.005;
            let a = eps.sqrt();
            let spec = table_spec(eps)?;
            let pi = std::f64::consts::PI;
            let times = vec![0.5, 2.0, 10.0, 100.0, 1e3, 1e4];
            push("two_bumps", spec, &|x| a * (-x + 1.5 * (2.0 * pi * x).sin()), times.clone(), standard());
            push("three_bumps", spec, &|x| a * (-x + 2.0 * (3.0 * pi * x).sin()), times, standard());
        }
        "5" => {
            let eps: f64 = 0.005;
            let a = eps.sqrt();
            push(
                "positive_zero",
                table_spec(eps)?,
                &|x| a * (-0.5 * x * x - x + 0.5),
                vec![1.0, 10.0, 100.0, 1e3, 1e4, 1e5],
                standard(),
            );
        }
        "6" => {
            let eps: f64 = 0.005;
            let a = eps.sqrt();
            for (name, shift) in [("shift_0.25", 0.25), ("shift_0.1", 0.1)] {
                let spec = ProblemSpec::new(eps, 1.0, a, -a, shifted_flux(eps, shift))?;
                push(name, spec, &table_datum(eps), vec![1.0, 10.0, 100.0, 1e3, 1e4], standard());
            }
        }
        "7" => {
            let eps: f64 = 0.001;
            let a = eps.sqrt();
            let spec = table_spec(eps)?;
            let times = vec![10.0, 1e2, 1e3, 1e4, 1e5];
            push("smooth", spec, &table_datum(eps), times.clone(), standard());
            push("discontinuous", spec, &|x| a * (chi(x, -1.0, -0.5) - chi(x, -0.5, 1.0)), times, standard());
        }
        "8" => {
            let eps: f64 = 0.01;
            let a = 1.8 * eps.sqrt();
            let spec = ProblemSpec::burgers_decreasing(eps, 1.0, a)?;
            let options = EvolveOptions {
                disc: Discretization { diffusion: Diffusion::MeanCurvature, convection: Convection::Rusanov },
                ..EvolveOptions::default()
            };
            push("large_data", spec, &|x| -a * x, vec![1.0, 10.0, 50.0, 100.0, 500.0], options);
        }
        "9" => {
            let eps: f64 = 0.005;
            let a = eps / 2.0;
            let spec = ProblemSpec::burgers_decreasing(eps, 1.0, a)?;
            push("small_data", spec, &|x| a * (0.5 * x * x - x - 0.5), vec![1.0, 10.0, 100.0, 1e3], standard());
        }
        other => {
            return Err(crate::Error::InvalidSpec(format!(
                "unknown figure id {other}; expected one of {}",
                FIGURE_IDS.join(", ")
            )))
        }
    }
    Ok(runs)
}
