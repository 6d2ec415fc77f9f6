//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("edit violation: {0}")]
    EditViolation(String),

    #[error("mesh validity error: {0}")]
    MeshValidity(String),

    #[error("degenerate tetrahedra (|volume| below threshold): ids {0:?}")]
    DegenerateTets(Vec<usize>),

    #[error("connectivity query error: {0}")]
    Query(String),

    #[error("preconditioner error: {0}")]
    Preconditioner(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
