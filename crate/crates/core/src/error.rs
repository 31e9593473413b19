use thiserror::Error;

use crate::logic::Violation;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid logic tree: {}", format_violations(.0))]
    InvalidTree(Vec<Violation>),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value {value} from primitive {index} ({label})")]
    NonFinitePrimitive {
        index: usize,
        label: String,
        value: f64,
    },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("unsupported structure: {0}")]
    Unsupported(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("problem too large for brute force: {0}")]
    TooLarge(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("trajectory format: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
