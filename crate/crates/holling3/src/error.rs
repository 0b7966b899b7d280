//! Error types shared across the crate.

use crate::model::State;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A quantity that must be nonnegative was negative.
    #[error("negative input: {name} = {value}")]
    NegativeInput { name: &'static str, value: f64 },

    /// A parameter set violates its invariants.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Leading cubic coefficient is zero; caller must dispatch to a quadratic.
    #[error("degenerate cubic: leading coefficient is zero")]
    DegenerateCubic,

    /// Prey nullcline evaluated at (or within 1e-12 of) its vertical asymptote.
    #[error("prey nullcline asymptote at x = {pole} (queried x = {x})")]
    NullclineAsymptote { x: f64, pole: f64 },

    /// Bracketed root finding requires opposite signs at the endpoints.
    #[error("no sign change over bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    /// Adaptive integrator drove the step below the representable floor.
    #[error("step size underflow at t = {t}, state = ({x}, {y})")]
    StepSizeUnderflow { t: f64, x: f64, y: f64 },

    /// A trajectory sample left the nonnegative quadrant beyond roundoff.
    #[error("positivity violated at t = {t}, state = ({x}, {y})")]
    PositivityViolation { t: f64, x: f64, y: f64 },

    /// A trajectory sample exceeded the dissipativity bound.
    #[error("boundedness violated at t = {t}: W = {w} > bound {bound}")]
    BoundednessViolation { t: f64, w: f64, bound: f64 },

    /// Singular-arc curve is only admissible for m < 1.
    #[error("no admissible singular arc: curve undefined for m = {m} >= 1")]
    SingularArcDomain { m: f64 },

    /// The optimizer stalled before reaching its stationarity target.
    #[error("optimizer did not converge: endpoint miss {miss}")]
    NonConvergence { miss: f64 },

    /// No restart reached the endpoint tolerance ball.
    #[error("no feasible solution: best endpoint miss {miss} > tolerance {tol}")]
    InfeasibleEndpoint { miss: f64, tol: f64 },

    /// An asymptotic probe landed on a state no equilibrium accounts for.
    #[error("attractor at ({x}, {y}) matches no computed equilibrium")]
    UnmatchedAttractor { x: f64, y: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn positivity(t: f64, s: State) -> Self {
        Error::PositivityViolation { t, x: s.x, y: s.y }
    }
}
