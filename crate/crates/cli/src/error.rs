use std::path::PathBuf;

use thiserror::Error;

use hyperbranch::{BasisError, OracleError, PostError, SolverError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing input {path}: {reason}")]
    Missing { path: PathBuf, reason: String },
    #[error("{path}: schema {found} not readable (expected {expected} major {major})")]
    Schema { path: PathBuf, found: String, expected: String, major: u32 },
    #[error("corrupt cache container {path}: {reason}")]
    CorruptCache { path: PathBuf, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Post(#[from] PostError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// failures, 4 for missing or unreadable inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Basis(_) => 2,
            CliError::Solver(SolverError::InvalidParams(_))
            | CliError::Solver(SolverError::InvalidConfig(_))
            | CliError::Solver(SolverError::Basis(_)) => 2,
            CliError::Oracle(OracleError::TruncationTooLarge { .. })
            | CliError::Oracle(OracleError::InvalidParams(_))
            | CliError::Oracle(OracleError::BadTarget(_)) => 2,
            CliError::Solver(_) | CliError::Post(_) | CliError::Oracle(_) => 3,
            CliError::Missing { .. }
            | CliError::Schema { .. }
            | CliError::CorruptCache { .. }
            | CliError::Io { .. } => 4,
        }
    }
}
