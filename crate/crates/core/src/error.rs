use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Everything that can go wrong inside the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two shapes that must agree did not.
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },
    /// A batch too small or too flat for the requested statistic.
    DegenerateBatch(String),
    /// A feature or component with zero spread where one is required.
    Degenerate(String),
    /// A loss or statistic that is undefined for the given input.
    Undefined(String),
    /// Non-finite values appeared during optimization or integration.
    Divergence { context: String, index: usize },
    /// A tape or gradient that does not belong to the model it is used with.
    Structural(String),
    /// Invalid configuration or model specification.
    Config(String),
    /// Index outside the valid range.
    OutOfRange { context: String, index: usize, len: usize },
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            actual,
        }
    }

    /// True for errors caused by non-finite numbers during training or integration.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence { .. })
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension {
                context,
                expected,
                actual,
            } => write!(f, "{context}: expected width {expected}, got {actual}"),
            Error::DegenerateBatch(msg) => write!(f, "degenerate batch: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Error::Undefined(msg) => write!(f, "undefined: {msg}"),
            Error::Divergence { context, index } => {
                write!(f, "numeric divergence in {context} at index {index}")
            }
            Error::Structural(msg) => write!(f, "structural mismatch: {msg}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::OutOfRange {
                context,
                index,
                len,
            } => write!(f, "{context}: index {index} out of range for length {len}"),
        }
    }
}

impl core::error::Error for Error {}
