use std::fmt;

/// Errors produced anywhere in the ingest → analytics → model → risk pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error at {context}: {message}")]
    Format { context: String, message: String },

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("region `{0}` has no valid cells")]
    EmptyRegion(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("no delay in 0..={max_delay} produced a valid correlation with at least {min_overlap} pairs")]
    NoValidDelay { max_delay: usize, min_overlap: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error(
        "training diverged at epoch {epoch} (loss = {loss}); lower the learning rate (currently {learning_rate}) or enable gradient clipping"
    )]
    Diverged {
        epoch: usize,
        loss: f64,
        learning_rate: f64,
    },

    #[error("unknown source label `{0}`")]
    UnknownSource(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("unsupported format `{0}`")]
    UnsupportedFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by the CLI (exit codes) and the HTTP service
/// (status codes and the machine-readable `code` field).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or invalid input data.
    Input,
    /// Input was valid but the analysis is degenerate (zero variance, no valid delay, divergence).
    Degenerate,
    /// Index or timestep outside the available range.
    Range,
}

impl Error {
    pub fn format(context: impl fmt::Display, message: impl fmt::Display) -> Self {
        Error::Format {
            context: context.to_string(),
            message: message.to_string(),
        }
    }

    pub fn shape(expected: impl fmt::Display, found: impl fmt::Display) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Stable snake_case identifier for the error variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Format { .. } => "format_error",
            Error::Inconsistent(_) => "inconsistent_data",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::Validation(_) => "validation_error",
            Error::Empty(_) => "empty_input",
            Error::EmptyRegion(_) => "empty_region",
            Error::Alignment(_) => "alignment_error",
            Error::UndefinedCorrelation(_) => "undefined_correlation",
            Error::NoValidDelay { .. } => "no_valid_delay",
            Error::Dimension(_) => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::Diverged { .. } => "training_diverged",
            Error::UnknownSource(_) => "unknown_source",
            Error::OutOfRange(_) => "out_of_range",
            Error::UnsupportedFormat(_) => "unsupported_format",
            Error::Io(_) => "io_error",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::UndefinedCorrelation(_) | Error::NoValidDelay { .. } | Error::Diverged { .. } => {
                ErrorClass::Degenerate
            }
            Error::OutOfRange(_) => ErrorClass::Range,
            _ => ErrorClass::Input,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        // serde_json's Display already carries "at line L column C".
        Error::format("json document", e)
    }
}
