//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the recognition chain.
#[derive(Debug, Error)]
pub enum Error {
    /// A CSV row did not have the expected column count.
    #[error("malformed row at line {line}: expected {expected} columns, got {got}")]
    MalformedRow {
        line: usize,
        expected: usize,
        got: usize,
    },

    /// A value could not be parsed or was not finite.
    #[error("non-finite or unparseable value at line {line}: {value:?}")]
    NonFiniteValue { line: usize, value: String },

    /// Consecutive timestamps differ by more than 1.5 sample periods.
    #[error("timestamp gap at line {line}: {gap_ms:.3} ms exceeds {max_ms:.3} ms")]
    TimestampGap {
        line: usize,
        gap_ms: f64,
        max_ms: f64,
    },

    /// Timestamps must strictly increase.
    #[error("non-monotone timestamp at line {line}")]
    NonMonotoneTimestamp { line: usize },

    /// A recording or label stream contained no data rows.
    #[error("empty stream")]
    EmptyStream,

    /// Label intervals overlap.
    #[error("overlapping label intervals: [{a_start}, {a_end}) and [{b_start}, {b_end})")]
    OverlappingIntervals {
        a_start: usize,
        a_end: usize,
        b_start: usize,
        b_end: usize,
    },

    /// A movement-class tag was not recognized.
    #[error("unknown movement class {tag:?} at line {line}")]
    UnknownClass { tag: String, line: usize },

    /// A label or segment interval has end <= start.
    #[error("empty interval: start {start} >= end {end}")]
    EmptyInterval { start: usize, end: usize },

    /// Two recordings start too far apart to be the same session.
    #[error("unsynchronized recording pair: start skew {skew_ms:.1} ms >= 1000 ms")]
    UnsynchronizedPair { skew_ms: f64 },

    /// Paired recordings disagree on subject, scenario, or wrist.
    #[error("session metadata mismatch: {0}")]
    MetadataMismatch(String),

    /// Segment indices fall outside the recording.
    #[error("segment [{start}, {end}) out of range for recording of {len} samples")]
    SegmentOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },

    /// A configuration value is invalid.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Input data violates an operation precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Vector or matrix dimensions do not match.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A serialized model or table could not be read back.
    #[error("malformed model file: {0}")]
    MalformedModel(String),

    /// A computation produced a non-finite or otherwise unusable number.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Coarse category used by the CLI to pick an exit code.
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            InvalidConfig(_) => ErrorCategory::Config,
            MalformedRow { .. }
            | NonFiniteValue { .. }
            | TimestampGap { .. }
            | NonMonotoneTimestamp { .. }
            | EmptyStream
            | OverlappingIntervals { .. }
            | UnknownClass { .. }
            | EmptyInterval { .. }
            | UnsynchronizedPair { .. }
            | MetadataMismatch(_)
            | SegmentOutOfRange { .. }
            | InvalidInput(_)
            | MalformedModel(_)
            | Io(_) => ErrorCategory::Data,
            DimensionMismatch { .. } | Numeric(_) => ErrorCategory::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Exit-code categories: config errors, data errors, numeric failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
}

impl ErrorCategory {
    /// Stable process exit code for scripting: 2 for configuration errors,
    /// 3 for data errors, 4 for numeric failures.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numeric => 4,
        }
    }
}
