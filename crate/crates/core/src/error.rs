//! Crate-wide error type and the exit-code mapping used by the CLI.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not fit the operation.
    #[error("{op}: dimension mismatch: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A caller violated an operation precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed CSV input; `line` is the 1-based line in the file.
    #[error("ingestion error{}: {detail}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Ingest { line: Option<usize>, detail: String },

    /// Malformed binary file; `offset` is the byte position of the fault.
    #[error("format error{}: {detail}", offset.map(|o| format!(" (byte {o})")).unwrap_or_default())]
    Format { offset: Option<u64>, detail: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn dimension(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension { op, detail: detail.into() }
    }

    pub fn ingest(line: usize, detail: impl Into<String>) -> Self {
        Error::Ingest { line: Some(line), detail: detail.into() }
    }

    pub fn format_at(offset: u64, detail: impl Into<String>) -> Self {
        Error::Format { offset: Some(offset), detail: detail.into() }
    }

    /// Process exit code for the CLI: 2 config, 3 ingestion, 4 numeric, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Ingest { .. } | Error::Format { .. } | Error::Alignment(_) => 3,
            Error::Dimension { .. }
            | Error::Contract(_)
            | Error::EmptyInput(_)
            | Error::UndefinedMetric(_)
            | Error::Numeric(_) => 4,
            Error::Io(_) => 5,
        }
    }
}
