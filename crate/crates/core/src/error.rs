use thiserror::Error;

use crate::geometry::ShapeViolation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(ShapeViolation),

    #[error("invalid shape parameter: {0}")]
    ShapeParameter(String),

    #[error("coefficient index {index} out of range for degree {degree}")]
    CoefficientIndex { index: usize, degree: usize },

    #[error("degree mismatch: {0} vs {1}")]
    DegreeMismatch(usize, usize),

    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("function `{name}` expects {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("evaluation error at ({x}, {y}): {message}")]
    Evaluation { x: f64, y: f64, message: String },

    #[error("meshing error: {0}")]
    Mesh(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Syntax { .. }
            | Error::UnknownIdentifier { .. }
            | Error::Arity { .. }
            | Error::ShapeParameter(_)
            | Error::DegreeMismatch(..)
            | Error::CoefficientIndex { .. }
            | Error::Unsupported(_) => 2,
            Error::InvalidShape(_) | Error::Mesh(_) => 3,
            Error::Solver { .. } | Error::Evaluation { .. } => 4,
            Error::Io(_) => 7,
        }
    }
}
