use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time {t} outside the path domain [0, {horizon})")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid time change: {0}")]
    InvalidTimeChange(String),

    #[error("time change horizon {timechange} does not match path horizon {path}")]
    HorizonMismatch { path: f64, timechange: f64 },

    #[error("piecewise-affine approximation needs more than {max_pieces} pieces per segment to reach {tolerance:e}")]
    ApproximationBudgetExceeded { tolerance: f64, max_pieces: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("path never enters the target set within its horizon")]
    NeverExits,

    #[error("classification undetermined: all entrance times exceed the horizon {horizon}")]
    Undetermined { horizon: f64 },

    #[error("invalid Lévy model: {0}")]
    InvalidModel(String),

    #[error("quadrature failed: {reason} (partial value {partial}, error estimate {error:e})")]
    QuadratureFailure { reason: String, partial: f64, error: f64 },

    #[error("start point {0:?} lies outside the closed domain")]
    StartOutsideDomain(Vec<f64>),

    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("control {a} outside [{lo}, {hi}]")]
    ControlOutOfRange { a: f64, lo: f64, hi: f64 },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    /// Errors caused by the request itself: bad configuration or inputs
    /// that violate a precondition.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Dimension { .. }
                | Error::InvalidPath(_)
                | Error::InvalidTimeChange(_)
                | Error::HorizonMismatch { .. }
                | Error::InvalidDomain(_)
                | Error::InvalidModel(_)
                | Error::InvalidPolicy(_)
                | Error::StartOutsideDomain(_)
                | Error::ControlOutOfRange { .. }
        )
    }

    pub(crate) fn dim(expected: usize, got: usize) -> Self {
        Error::Dimension { expected, got }
    }
}
