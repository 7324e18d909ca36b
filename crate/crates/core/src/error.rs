use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Real orthogonal designs only exist for 2, 4 and 8 antennas (1 is the
    /// single-antenna degenerate case).
    #[error("unsupported Tag antenna count M={0}: a real orthogonal design exists only for M in {{1, 2, 4, 8}}")]
    UnsupportedAntennaCount(usize),

    #[error("differential coding supports only M=2 Tag antennas, got M={0}")]
    UnsupportedDifferential(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("Tag reflection |x[{antenna}]| = {magnitude} exceeds 1 (passive backscatter)")]
    PassivityViolation { antenna: usize, magnitude: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("bias for Reader antenna {antenna} is not positive ({value})")]
    NonPositiveBias { antenna: usize, value: f64 },

    #[error("differential bit stream must have even length, got {0}")]
    OddBitCount(usize),

    #[error("differential window needs 4 symbol periods, got {0}")]
    WindowTooShort(usize),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed results file {path}, line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
