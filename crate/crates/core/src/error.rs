use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("non-finite evaluation at x = {x}: {what}")]
    NonFinite { x: f64, what: String },

    #[error("quadrature did not converge: estimated error {achieved:e} exceeds tolerance {target:e}")]
    Quadrature { achieved: f64, target: f64 },

    #[error("particle cloud absorbed at t = {time}: no particle alive")]
    Absorbed { time: f64 },

    #[error("degenerate reweighting: {0}")]
    Degenerate(String),

    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error("bound violated at x = {x}: lhs {lhs} > rhs {rhs}")]
    BoundViolation { x: f64, lhs: f64, rhs: f64 },

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
