use caplp_core::continuation::ContinuationError;
use caplp_core::solver::SolveError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("parameter range: {0}")]
    Range(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("oracle needs rotationally symmetric data, got kind `{0}`")]
    NotSymmetric(String),
    #[error("{0}")]
    Stall(ContinuationError),
    #[error("audit failed: {0}")]
    Audit(String),
    #[error("{message}")]
    Sweep { code: i32, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit status.
    pub fn code(&self) -> i32 {
        match self {
            CliError::Stall(_) => 2,
            CliError::Audit(_) => 3,
            CliError::Sweep { code, .. } => *code,
            _ => 1,
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Continuation(c) => CliError::Stall(c),
            SolveError::Params(p) => CliError::Range(p.to_string()),
            SolveError::Unsupported { .. } => CliError::Range(e.to_string()),
            SolveError::GridMismatch { .. } => CliError::GridMismatch(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}
