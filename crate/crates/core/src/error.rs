use std::io;
use std::path::PathBuf;

use crate::fingerprint::Fingerprint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("I/O error on {path}: {source}")]
    IoPath {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid fingerprint: {0}")]
    Fingerprint(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("integrity error: fingerprint {0} is not stored")]
    MissingFingerprint(Fingerprint),

    #[error("corrupt store file {path}: {msg}")]
    Corrupt { path: PathBuf, msg: String },

    #[error("leakage rate {rate} requires {needed} pairs but only {available} are available")]
    InsufficientGroundTruth {
        rate: f64,
        needed: usize,
        available: usize,
    },

    #[error("storage saving is undefined for an empty report (logical size is 0)")]
    EmptyReport,

    #[error("missing ground truth for cipher fingerprint {0}")]
    MissingGroundTruth(Fingerprint),
}

impl Error {
    pub(crate) fn io_at(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
        let path = path.into();
        move |source| Error::IoPath { path, source }
    }
}
