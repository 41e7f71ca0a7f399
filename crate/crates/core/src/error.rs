use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value in {layer}: {detail}")]
    Numeric { layer: String, detail: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("pilot capacity error: tau = {tau} < k_users * n_u = {required}")]
    Capacity { tau: usize, required: usize },

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("checkpoint mismatch: expected {expected}, found {found}")]
    Mismatch { expected: String, found: String },

    #[error(
        "training aborted at iteration {iteration}: non-finite loss \
         (batch indices {batch:?}, recent losses {loss_tail:?})"
    )]
    Diverged {
        iteration: usize,
        batch: Vec<usize>,
        loss_tail: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn numeric(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            layer: layer.into(),
            detail: detail.into(),
        }
    }
}
