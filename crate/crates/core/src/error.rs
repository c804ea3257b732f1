use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported or corrupt image {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("malformed file {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("window at ({x0}, {y0}) lies outside a {width}x{height} image")]
    Bounds {
        x0: usize,
        y0: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("need at least {needed} descriptors, got {got}")]
    Size { needed: usize, got: usize },
    #[error("invalid data: {0}")]
    Data(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("value outside the function domain: {0}")]
    Domain(String),
    #[error("index {index} out of range for k = {k}")]
    Range { index: usize, k: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("dataset error: {0}")]
    Dataset(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            message: message.into(),
        }
    }
}
