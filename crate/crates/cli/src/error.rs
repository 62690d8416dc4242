use std::path::PathBuf;

use gscatter::ScatterError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Scatter(#[from] ScatterError),

    /// A solve finished without converging; the record is still emitted.
    #[error("solver ended with status {0}")]
    NotConverged(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for non-convergence, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NotConverged(_) => 2,
            CliError::Scatter(ScatterError::NoConvergence { .. }) => 2,
            CliError::Scatter(ScatterError::NotSpd(_)) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::Parse { .. } => "ParseError",
            CliError::Io { .. } => "Io",
            CliError::Config(_) => "Config",
            CliError::Scatter(e) => e.kind(),
            CliError::NotConverged(_) => "NotConverged",
        }
    }

    /// Machine-readable error object written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": { "kind": self.kind(), "message": self.to_string() } });
        if let CliError::Parse { line, path, .. } = self {
            v["error"]["line"] = json!(line);
            v["error"]["path"] = json!(path);
        }
        v
    }
}
