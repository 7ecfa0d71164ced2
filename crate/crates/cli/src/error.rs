use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: skewlab::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot compare a `{left}` run with a `{right}` run")]
    KindMismatch { left: String, right: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn stage(stage: &str, source: skewlab::Error) -> Self {
        CliError::Stage {
            stage: stage.to_string(),
            source,
        }
    }

    /// 1 for bad inputs, 2 for numerical failures, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::KindMismatch { .. } => 1,
            CliError::Stage { source, .. } if !source.is_numerical() => 1,
            CliError::Stage { .. } => 2,
            CliError::Io { .. } => 3,
        }
    }
}
