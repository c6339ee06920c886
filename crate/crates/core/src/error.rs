use thiserror::Error;

/// Errors raised by constructors and operations across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("frequency pair ({m}, {n}) is not canonical: need m >= 0, and n > 0 when m = 0")]
    NonCanonicalPair { m: i32, n: i32 },

    #[error("frequency pair ({m}, {n}) appears more than once")]
    DuplicatePair { m: i32, n: i32 },

    #[error("frequency pair ({m}, {n}) exceeds the spin bound 2J = {two_j}")]
    SpinBoundExceeded { m: i32, n: i32, two_j: u32 },

    #[error("function is not bounded by 1: sup |C| = {sup}")]
    NotBounded { sup: f64 },

    #[error("function is not relational: term ({m}, {n}) has m != n")]
    NotRelational { m: i32, n: i32 },

    #[error("invalid outcome label {0}: expected +1 or -1")]
    InvalidOutcome(i64),

    #[error("box is not normalized: residual {residual}")]
    NotNormalized { residual: f64 },

    #[error("box has negative probability {min}")]
    NegativeProbability { min: f64 },

    #[error("box is signalling: worst marginal coefficient {residual}")]
    Signalling { residual: f64 },

    #[error("conditional box undefined: conditioning marginal {marginal} is below {threshold}")]
    UndefinedConditional { marginal: f64, threshold: f64 },

    #[error("sample set is degenerate: rank {rank} < {needed} unknowns")]
    Degenerate { rank: usize, needed: usize },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("premise check failed: {0}")]
    PremiseFailed(String),

    #[error("invalid input in `{field}`: {reason}")]
    Format { field: String, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn format(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
