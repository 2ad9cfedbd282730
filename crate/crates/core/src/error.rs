use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {stage}: {detail}")]
    NonFinite { stage: &'static str, detail: String },

    #[error("missing dataset files under {}: expected {}", root.display(), expected.join(", "))]
    MissingFiles { root: PathBuf, expected: Vec<String> },

    #[error("unknown label code {code} in {file}")]
    UnknownLabel { code: String, file: String },

    #[error("unknown subject {requested}; available: {available:?}")]
    UnknownSubject { requested: u32, available: Vec<u32> },

    #[error("unknown key `{key}`; known keys: {}", known.join(", "))]
    UnknownKey { key: String, known: Vec<String> },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image encoding: {0}")]
    Image(String),
}

impl Error {
    /// Stable short code printed by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Data(_) => "E_DATA",
            Error::Shape(_) => "E_SHAPE",
            Error::Config(_) => "E_CONFIG",
            Error::NonFinite { .. } => "E_NONFINITE",
            Error::MissingFiles { .. } => "E_MISSING",
            Error::UnknownLabel { .. } => "E_LABEL",
            Error::UnknownSubject { .. } => "E_SUBJECT",
            Error::UnknownKey { .. } => "E_KEY",
            Error::Format(_) => "E_FORMAT",
            Error::Io(_) => "E_IO",
            Error::Json(_) => "E_JSON",
            Error::Image(_) => "E_IMAGE",
        }
    }
}
