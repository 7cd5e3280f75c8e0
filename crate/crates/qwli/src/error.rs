//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violates a physical or numerical domain constraint.
    #[error("invalid {field}: {msg}")]
    Invalid { field: &'static str, msg: String },

    /// Both pump polarization amplitudes are zero; no state can be prepared.
    #[error("degenerate state: {0}")]
    DegenerateState(String),

    /// Too few usable data points for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Two inputs that must agree (e.g. pump wavelengths) do not.
    #[error("mismatch: {0}")]
    Mismatch(String),

    /// The regression design matrix is rank deficient.
    #[error("rank-deficient regression: {0}")]
    RankDeficient(String),

    /// Malformed interferogram CSV.
    #[error("csv parse error at row {row}: {msg}")]
    CsvParse { row: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(field: &'static str, msg: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            msg: msg.into(),
        }
    }
}
