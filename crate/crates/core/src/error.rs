use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value lies outside the domain of the formula being evaluated.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    /// An update denominator vanished: the item has no comparisons, wins or losses.
    #[error("degenerate preference matrix: item {item} {reason}")]
    DegenerateMatrix { item: usize, reason: &'static str },

    #[error("comparison graph is not strongly connected: item {item} {reason}")]
    NotConnected { item: usize, reason: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate response index {0}")]
    DuplicateResponse(usize),

    #[error("could not collect {wanted} distinct responses within {draws} draws")]
    SamplingExhausted { wanted: usize, draws: usize },

    #[error("sample list is empty")]
    EmptySamples,

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("iteration {iteration} aborted: {skipped} of {attempted} samples skipped")]
    IterationAborted {
        iteration: usize,
        skipped: usize,
        attempted: usize,
    },

    #[error("no perturbed policy produced a nonzero training residual")]
    NoValidPerturbation,

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
