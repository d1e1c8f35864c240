use std::path::PathBuf;

use thiserror::Error;

use crate::config::Origin;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{origin}: {message}")]
    Config { origin: Origin, message: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("missing {}: run `unlearn-lab {producer}` first", path.display())]
    MissingArtifact {
        path: PathBuf,
        producer: &'static str,
    },

    #[error("{} is stale ({detail}): rerun `unlearn-lab {producer}`", path.display())]
    StaleArtifact {
        path: PathBuf,
        producer: &'static str,
        detail: String,
    },

    #[error("cannot compare runs with different datasets: {0}")]
    MixedRuns(String),

    #[error("malformed report {}: {message}", path.display())]
    Report { path: PathBuf, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] shortcut_unlearn::Error),
}

impl HarnessError {
    /// 1 for bad input, 2 for anything that failed while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. }
            | HarnessError::Validation(_)
            | HarnessError::MixedRuns(_) => 1,
            HarnessError::MissingArtifact { .. }
            | HarnessError::StaleArtifact { .. }
            | HarnessError::Report { .. }
            | HarnessError::Io { .. }
            | HarnessError::Core(_) => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
