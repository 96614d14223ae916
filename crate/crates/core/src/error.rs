use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidSpec(String),

    #[error("requested {requested:?} profile but boundary data u- = {u_minus}, u+ = {u_plus}")]
    DirectionMismatch {
        requested: crate::problem::Direction,
        u_minus: f64,
        u_plus: f64,
    },

    #[error("flux oscillation M - m = {span} is not below epsilon = {epsilon}")]
    GapViolation { span: f64, epsilon: f64 },

    #[error("integration constant {value} outside the admissible interval ({lo}, {hi})")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("no sign change on [{a}, {b}]: g(a) = {fa}, g(b) = {fb}")]
    NoSignChange { a: f64, b: f64, fa: f64, fb: f64 },

    #[error("quadrature did not reach tolerance: estimate {estimate}, error {error}")]
    QuadratureFailure { estimate: f64, error: f64 },

    #[error("singular integrand: kappa - f(s) vanishes on the path to {target}")]
    SingularPath { target: f64 },

    #[error("interface location {xi} outside the admissible range ({lo}, {hi})")]
    XiOutOfRange { xi: f64, lo: f64, hi: f64 },

    #[error("Newton iteration failed at t = {time} with dt = {dt}: residual {residual:e}")]
    NewtonDivergence { time: f64, dt: f64, residual: f64 },

    #[error("explicit step dt = {dt} exceeds the stability cap {cap}")]
    ExplicitCflViolation { dt: f64, cap: f64 },

    #[error("field has no sign change")]
    NoCrossing,

    #[error("field has {0} sign changes")]
    MultipleCrossings(usize),

    #[error("interface never reached |xi| <= {threshold} after t = {t_start}")]
    ThresholdNeverReached { t_start: f64, threshold: f64 },

    #[error("linearization needs a smoothed profile (smoothing width is zero)")]
    NonSmoothProfile,

    #[error("eigensolver did not converge: {0}")]
    ConvergenceFailure(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("closed form undefined: {0}")]
    DomainError(String),

    #[error("config line {line}: {message}")]
    ConfigParse { line: usize, message: String },
}
