use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Certificate or study predicate failed.
    pub const FAILED: i32 = 1;
    pub const ITERATION_LIMIT: i32 = 2;
    pub const INFEASIBLE: i32 = 3;
    pub const INPUT: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] sassc_core::Error),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Json { .. } | CliError::Input(_) => exit::INPUT,
            CliError::Core(e) => core_exit_code(e),
            CliError::Write { .. } | CliError::Csv(_) => exit::FAILED,
        }
    }
}

fn core_exit_code(e: &sassc_core::Error) -> i32 {
    use sassc_core::Error as E;
    match e {
        E::EmptyGrid
        | E::Ellipticity { .. }
        | E::Dimension(_)
        | E::InvalidInput(_)
        | E::Precondition(_)
        | E::SizeGuard { .. } => exit::INPUT,
        E::Scenario { source, .. } => core_exit_code(source),
        _ => exit::FAILED,
    }
}

pub type CliResult<T> = Result<T, CliError>;
