use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid step function: {0}")]
    InvalidFunction(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("function support [{left}, {right}) is not contained in [-{half_width}, {half_width}]")]
    SupportOutsideGrid {
        left: f64,
        right: f64,
        half_width: u32,
    },

    #[error("estimation needs at least one parent")]
    NoParents,

    #[error("horizon T = {horizon} must exceed the largest parent position {max_parent}")]
    HorizonTooShort { horizon: f64, max_parent: f64 },

    #[error("unit mismatch: parents in {parents} bases/unit, children in {children} bases/unit")]
    UnitMismatch { parents: f64, children: f64 },

    #[error("unknown signal `{0}` (expected signal1, signal2 or signal3)")]
    UnknownSignal(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid motif `{0}`: must be a non-empty word over a, c, g, t")]
    InvalidMotif(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
