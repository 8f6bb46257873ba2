use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum OodError {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    /// Invalid hyperparameter or run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed labels or features.
    #[error("data error: {0}")]
    Data(String),

    #[error("fit error: class {class} has no training rows")]
    EmptyClass { class: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    /// The caller combined options that cannot work together.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error: {message} at offset {offset}")]
    Parse { offset: u64, message: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<OodError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OodError>;

impl OodError {
    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        OodError::Shape {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn parse(offset: u64, message: impl Into<String>) -> Self {
        OodError::Parse {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        OodError::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping file-path context.
    pub fn root(&self) -> &OodError {
        match self {
            OodError::File { source, .. } => source.root(),
            other => other,
        }
    }
}
