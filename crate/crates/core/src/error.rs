use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("nullspace of the membership matrix is trivial; the root solution is the only feasible point")]
    TrivialNullspace,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid model file: {0}")]
    Model(String),
}

impl Error {
    /// True for failures of the numerical pipeline (solver breakdown,
    /// non-positive-definite Hessian, infeasible weights) as opposed to bad
    /// input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::TrivialNullspace)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
