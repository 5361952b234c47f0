use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violates an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A rate table is not monotone or not positive.
    #[error("rate violates monotonicity: {0}")]
    NonMonotoneRate(String),

    /// The ODE integrator could not make progress.
    #[error("step size collapsed at t = {t} (h = {step:e}); rate inconsistent with Lipschitz continuity")]
    StepCollapse { t: f64, step: f64 },

    /// A point was queried outside the sampled domain of the profile curve.
    #[error("t = {t} lies outside the profile domain [{t_min}, {t_max}]; solve a longer curve")]
    OutsideCurve { t: f64, t_min: f64, t_max: f64 },

    /// A point expected inside the body lies outside it.
    #[error("point {0:?} is not inside the domain")]
    NotInside([f64; 3]),

    #[error("window does not meet the domain")]
    EmptyWindow,

    #[error("target volume {target} exceeds the window capacity {capacity}")]
    CapacityExceeded { target: f64, capacity: f64 },

    #[error("target unreachable: {0}")]
    Unreachable(String),

    #[error("malformed table: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than failed numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::NonMonotoneRate(_)
                | Error::EmptyWindow
                | Error::CapacityExceeded { .. }
                | Error::Parse(_)
                | Error::OutsideCurve { .. }
        )
    }
}
