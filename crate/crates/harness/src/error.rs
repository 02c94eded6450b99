use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(ConfigError),

    #[error("{context}: {source}")]
    Runtime {
        context: String,
        source: hdus_core::Error,
    },

    #[error("i/o error at {}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

impl HarnessError {
    pub fn runtime(context: impl Into<String>, source: hdus_core::Error) -> Self {
        HarnessError::Runtime {
            context: context.into(),
            source,
        }
    }

    pub fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// 2 for configuration problems, 3 for everything that failed at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_)
            | HarnessError::Runtime {
                source: hdus_core::Error::Config(_),
                ..
            } => 2,
            _ => 3,
        }
    }
}
