use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable inputs or schema violations; nothing was computed.
    #[error("{message}")]
    Usage { reason: &'static str, message: String },

    /// The computation ran and its verdict is negative.
    #[error("{message}")]
    Failed { reason: &'static str, message: String },

    #[error(transparent)]
    Core(#[from] fbs_hinf::Error),

    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn usage(reason: &'static str, message: impl Into<String>) -> Self {
        CliError::Usage {
            reason,
            message: message.into(),
        }
    }

    pub fn failed(reason: &'static str, message: impl Into<String>) -> Self {
        CliError::Failed {
            reason,
            message: message.into(),
        }
    }

    pub fn reason(&self) -> &'static str {
        match self {
            CliError::Usage { reason, .. } | CliError::Failed { reason, .. } => reason,
            CliError::Core(e) => e.code(),
            CliError::Write { .. } => "io-error",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => 2,
            _ => 1,
        }
    }

    /// `error: reason=<code> <text>` on one line.
    pub fn line(&self) -> String {
        let text = self.to_string().replace(['\n', '\r'], " ");
        format!("error: reason={} {}", self.reason(), text.trim())
    }
}

pub type CliResult<T> = Result<T, CliError>;
