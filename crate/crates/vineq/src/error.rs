//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state of {requested} qubits exceeds the {limit}-qubit capacity limit")]
    CapacityExceeded { requested: usize, limit: usize },

    #[error("qubit index {qubit} out of range 1..={n_qubits}")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error("invalid gate: control equals target (qubit {0})")]
    InvalidGate(usize),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("Kendall's tau is undefined: input vector is constant")]
    UndefinedTau,

    #[error("invalid vine structure: {0}")]
    InvalidVine(String),

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("non-positive price {value} for {ticker} at data row {row}")]
    NonPositivePrice {
        ticker: String,
        row: usize,
        value: f64,
    },

    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },

    #[error("training diverged in block {label}: non-finite loss at iteration {iter}")]
    NonFiniteLoss { label: String, iter: usize },

    #[error("{0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
