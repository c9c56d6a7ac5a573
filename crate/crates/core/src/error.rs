use thiserror::Error;

/// Errors raised by the models, simulators, estimators and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("state is not in the open orthant: {0:?}")]
    NonPositiveState(Vec<f64>),

    #[error(
        "volatility matrix is numerically singular at {x:?} (|det| = {det:e}, floor = {floor:e})"
    )]
    SingularVolatility { x: Vec<f64>, det: f64, floor: f64 },

    #[error("model `{0}` coefficients are only defined on the open orthant")]
    ExtensionUnavailable(String),

    #[error("model validation failed: {0}")]
    ModelValidation(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("initial weights are not in the open simplex: {0:?}")]
    SimplexViolation(Vec<f64>),

    #[error("deflated value {value:e} on path {path} exceeds the overflow guard")]
    OverflowGuard { path: usize, value: f64 },

    #[error("explicit step certificate failed: {0}")]
    StabilityViolation(String),

    #[error("query ({tau}, {x:?}) lies outside the solved domain")]
    DomainError { tau: f64, x: Vec<f64> },

    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),

    #[error("invalid parameter: {0}")]
    ParamInvalid(String),

    #[error("wealth became non-positive at t = {time} on path {path} (seed {seed:#018x})")]
    WealthNonPositive { path: usize, seed: u64, time: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed input: {0}")]
    Parse(String),
}

impl Error {
    /// Numerical failures, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::OverflowGuard { .. }
                | Error::StabilityViolation(_)
                | Error::WealthNonPositive { .. }
                | Error::SingularVolatility { .. }
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Parse(e.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
