// SPDX-License-Identifier: MIT OR Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A serialized artifact declares an AU ordering different from the catalog.
    #[error("catalog mismatch: {0}")]
    CatalogMismatch(String),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("error budget exceeded at line {line}: {skipped} malformed records (budget {budget})")]
    BudgetExceeded {
        line: usize,
        skipped: usize,
        budget: usize,
    },

    #[error("stream integrity: expected timestep {expected}, got {got}")]
    StreamIntegrity { expected: usize, got: usize },

    #[error("model integrity: {0}")]
    ModelIntegrity(String),

    #[error("unusable corpus: {0}")]
    UnusableCorpus(String),

    #[error("scenario spec: {0}")]
    Spec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for this error: 2 for input-contract violations,
    /// 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::CatalogMismatch(_)
            | Error::Format { .. }
            | Error::BudgetExceeded { .. }
            | Error::StreamIntegrity { .. }
            | Error::UnusableCorpus(_)
            | Error::Spec(_)
            | Error::Json(_)
            | Error::Csv(_) => 2,
            Error::ModelIntegrity(_) | Error::Io(_) => 1,
        }
    }
}
