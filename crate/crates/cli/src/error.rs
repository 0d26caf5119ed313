use std::path::Path;

use fasm::FasmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Model(#[from] FasmError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            context: path.display().to_string(),
            source,
        }
    }

    /// Machine-readable category printed ahead of the message.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Input(_) => "input",
            CliError::Model(
                FasmError::NonFinite { .. }
                | FasmError::TooFewSubjects { .. }
                | FasmError::DimensionMismatch(_)
                | FasmError::OutOfDomain { .. },
            ) => "input",
            CliError::Model(FasmError::InvalidConfig(_) | FasmError::InvalidBasis(_)) => "config",
            CliError::Model(_) => "numeric",
            CliError::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.category() {
            "usage" => 2,
            "config" => 3,
            "input" => 4,
            "numeric" => 5,
            _ => 6,
        }
    }

    /// `error: <category>: <message>` on one line.
    pub fn one_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error: {}: {}", self.category(), msg)
    }
}
