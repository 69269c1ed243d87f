use thiserror::Error;

/// Errors raised by the solver. Every variant maps to a stable reason code
/// so that drivers can emit one machine-parsable line per failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("convexity violation: smallest L_vv eigenvalue {eigenvalue:.3e} at x={x:?}, v={v:?}")]
    ConvexityViolation {
        eigenvalue: f64,
        x: Vec<f64>,
        v: Vec<f64>,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("refinement failed: {0}")]
    RefineFailed(String),

    #[error("mountain-pass geometry lost: {0}")]
    GeometryLost(String),

    #[error("overflow in the linearized flow at t = {time}")]
    Overflow { time: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::ConvexityViolation { .. } => "convexity-violation",
            Error::Numeric(_) => "numeric",
            Error::RefineFailed(_) => "refine-failed",
            Error::GeometryLost(_) => "geometry-lost",
            Error::Overflow { .. } => "overflow",
            Error::Precondition(_) => "precondition",
            Error::Config { .. } => "config",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
