use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;
pub const EXIT_PARTIAL: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Estimation(#[from] moment_density::Error),

    #[error("malformed table: {0}")]
    Table(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("experiment incomplete: {0}")]
    Partial(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use moment_density::Error as E;
        match self {
            Self::Estimation(E::HankelNotPd { .. }) => EXIT_DEGENERATE,
            Self::Estimation(
                E::NotConverged { .. }
                | E::LineSearchStalled { .. }
                | E::NonIntegrable
                | E::NegativeResult(_)
                | E::CollapsedComponent(_),
            ) => EXIT_NOT_CONVERGED,
            Self::Partial(_) => EXIT_PARTIAL,
            _ => EXIT_INPUT,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
