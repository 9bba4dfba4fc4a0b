use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("sketch has {len} segments, limit is {max}")]
    Length { len: usize, max: usize },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("cannot normalize: offsets have zero standard deviation")]
    Normalization,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("gradient oracle error: {0}")]
    Oracle(String),

    #[error("non-finite value in loss term {term}")]
    NonFinite { term: &'static str },

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error("corrupt checkpoint: {0}")]
    Integrity(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("record {index}: {source}")]
    AtRecord {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image decode error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_record(index: usize, source: Error) -> Self {
        Error::AtRecord {
            index,
            source: Box::new(source),
        }
    }

    /// True for errors caused by bad input data rather than a failure while computing.
    pub fn is_data_error(&self) -> bool {
        if let Error::AtRecord { source, .. } = self {
            return source.is_data_error();
        }
        matches!(
            self,
            Error::Parse { .. }
                | Error::Length { .. }
                | Error::Validation(_)
                | Error::Normalization
                | Error::Incompatible(_)
                | Error::Integrity(_)
                | Error::EmptyInput(_)
                | Error::Io { .. }
                | Error::Image(_)
        )
    }
}
