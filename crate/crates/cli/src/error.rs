use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("schema_version {found} is not supported (expected {supported})")]
    SchemaVersionMismatch { found: i64, supported: i64 },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("invalid scenario: {0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] grw_core::Error),
}

impl CliError {
    pub fn io(path: &Path, message: impl Into<String>) -> Self {
        Self::Io { path: path.display().to_string(), message: message.into() }
    }

    /// Input problems exit with 1; everything else is a failed assertion.
    pub fn is_input_error(&self) -> bool {
        use grw_core::Error as E;
        match self {
            Self::Parse { .. } | Self::SchemaVersionMismatch { .. } | Self::Io { .. } | Self::Invalid(_) => true,
            Self::Core(e) => matches!(
                e,
                E::NonPositiveWarp { .. }
                    | E::BadParams(_)
                    | E::OutOfInterval { .. }
                    | E::UnsupportedDimension(_)
                    | E::PoleTooClose(_)
                    | E::ShapeMismatch { .. }
                    | E::NotSpacelike { .. }
                    | E::HeightOutOfInterval { .. }
                    | E::UnsupportedFiber(_)
                    | E::BadG { .. }
                    | E::Expression { .. }
            ),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
