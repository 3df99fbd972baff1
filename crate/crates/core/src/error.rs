use thiserror::Error;

use crate::rounding::RoundingMode;

/// Errors raised by scalar arithmetic and the reducers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArithError {
    #[error("operands disagree on precision or rounding mode ({left} vs {right})")]
    PrecisionMismatch { left: String, right: String },
    #[error("fixed-point formats differ ({left} vs {right})")]
    FormatMismatch { left: String, right: String },
    #[error("precision must be at least 2 bits, got {0}")]
    InvalidPrecision(u32),
    #[error("invalid fixed-point format: {0}")]
    InvalidFormat(String),
    #[error("invalid operation: {0}")]
    InvalidOperation(&'static str),
    #[error("value {value} does not fit in {format}")]
    Overflow { value: String, format: String },
    #[error("cannot parse '{0}' as a number")]
    Parse(String),
    #[error("error-free transformations require round-to-nearest-even, got {0}")]
    UnsupportedMode(RoundingMode),
    #[error("{0}")]
    Incompatible(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}
