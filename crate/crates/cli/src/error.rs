use std::path::Path;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const GRAD_CHECK_FAILED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERIC: i32 = 3;
    pub const IO: i32 = 4;
    pub const LOAD: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("gradient check failed: {0}")]
    GradCheck(String),

    #[error("{0}")]
    Numeric(String),

    #[error("{0}")]
    Io(String),

    #[error("{0}")]
    Load(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::GradCheck(_) => exit::GRAD_CHECK_FAILED,
            CliError::Numeric(_) => exit::NUMERIC,
            CliError::Io(_) => exit::IO,
            CliError::Load(_) => exit::LOAD,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    /// A core error raised while reading `path`.
    pub fn load(path: &Path, e: ris_chanest::Error) -> Self {
        match e {
            ris_chanest::Error::Io(io) => CliError::io(path, io),
            other => CliError::Load(format!("{}: {other}", path.display())),
        }
    }
}

impl From<ris_chanest::Error> for CliError {
    fn from(e: ris_chanest::Error) -> Self {
        use ris_chanest::Error as E;
        let msg = e.to_string();
        match e {
            E::Config { .. } | E::Capacity { .. } => CliError::Config(msg),
            E::Numeric { .. } | E::Diverged { .. } | E::Domain(_) => CliError::Numeric(msg),
            E::Io(_) => CliError::Io(msg),
            E::Format(_) | E::Mismatch { .. } | E::Json(_) | E::Shape(_) => CliError::Load(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
