use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of a function.
    #[error("domain error: {what} = {value} ({reason})")]
    Domain {
        what: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// A configuration value failed validation. `field` is a dotted path.
    #[error("config: {field}: {reason}")]
    Config { field: String, reason: String },

    /// Counting statistics too thin to form the requested quantity.
    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),

    #[error("calibration: {0}")]
    Calibration(#[from] CalibrationError),

    /// Malformed record in a statistics file. Lines are 1-based.
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("pair mismatch: expected {expected}, found {found}")]
    PairMismatch { expected: String, found: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Failures raised by the feedback loops.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("HOM dip not found: minimum coincidence value {min_value:.4} above threshold {threshold}")]
    DipNotFound { min_value: f64, threshold: f64 },

    #[error("timing offset {offset_ps} ps outside delay-chip span of +/-{span_ps} ps")]
    TimingRange { offset_ps: f64, span_ps: f64 },

    #[error("polarization loop did not converge (overlap {overlap:.4})")]
    PolarizationNotConverged { overlap: f64 },

    #[error("scan configuration: {0}")]
    Scan(String),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, reason: &'static str) -> Self {
        Error::Domain {
            what,
            value,
            reason,
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
