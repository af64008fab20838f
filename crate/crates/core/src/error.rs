use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },

    /// Parameters lie outside the regime an operation is defined for.
    #[error("regime: {0}")]
    Regime(String),

    #[error("domain: {0}")]
    Domain(String),

    #[error("step size: {0}")]
    Step(String),

    #[error("transform invalid: {0}")]
    TransformInvalid(String),

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("config: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }

    /// Process exit code used by the command line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. }
            | Error::Regime(_)
            | Error::Domain(_)
            | Error::Step(_)
            | Error::TransformInvalid(_)
            | Error::Config(_) => 2,
            Error::Bracketing(_) | Error::Quadrature(_) => 3,
            Error::Io(_) => 4,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Config(e.to_string())
        }
    }
}
