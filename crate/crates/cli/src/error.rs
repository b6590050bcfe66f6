use ipi_core::IpiError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Config that does not match the schema; `path` is the offending field.
    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("{0}")]
    Runtime(#[from] IpiError),

    /// Two value grids that are not sampled on the same points.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } | CliError::GridMismatch(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Io { .. } | CliError::Csv(_) | CliError::Json(_) => 1,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}
