use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: unsupported audio: {reason}", path.display())]
    UnsupportedAudio { path: PathBuf, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("input too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("insufficient training data: {0}")]
    InsufficientData(String),

    #[error("speaker {0} has no neural codebook of the requested size")]
    MissingNeuralCodebook(String),

    #[error("speaker {speaker} has no linear codebook with {bits} bits")]
    MissingLinearCodebook { speaker: String, bits: u32 },

    #[error("missing models: {0}")]
    MissingModels(String),

    #[error("missing score tables: {0}")]
    MissingScores(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Coarse category used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidArgument(_) | Error::InvalidConfig(_) => ErrorCategory::Config,
            Error::Io { .. }
            | Error::Wav { .. }
            | Error::Json { .. }
            | Error::UnsupportedAudio { .. }
            | Error::InvalidManifest(_)
            | Error::MissingModels(_)
            | Error::MissingScores(_) => ErrorCategory::Input,
            Error::TooShort { .. }
            | Error::InsufficientData(_)
            | Error::MissingNeuralCodebook(_)
            | Error::MissingLinearCodebook { .. } => ErrorCategory::Compute,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Input,
    Compute,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Input => 3,
            ErrorCategory::Compute => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
