use thiserror::Error;

/// Errors raised by the array, control and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate direction: point coincides with origin")]
    DegenerateDirection,
    #[error("null pattern: total radiated power is zero")]
    NullPattern,
    #[error("infeasible spacing: {0}")]
    InfeasibleSpacing(String),
    #[error("cannot align thrust: external force too strong off-axis")]
    CannotAlignThrust,
    #[error("insufficient thrust: net force toward the target is not positive")]
    InsufficientThrust,
    #[error("wind exceeds authority: hover needs {required:.1} rad/s, limit is {limit:.1} rad/s")]
    WindExceedsAuthority { required: f64, limit: f64 },
    #[error("unstable trajectory at t = {time:.3} s")]
    UnstableTrajectory { time: f64 },
    #[error("maneuver plan did not converge: {0}")]
    PlanNotConverged(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by bad inputs rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidInput(_) | Error::Io(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
