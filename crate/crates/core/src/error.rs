use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad error classes; the CLI maps these onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad spec file, bad flag, bad function argument.
    Argument,
    /// Input data could not be ingested or is too small for the request.
    Data,
    /// An internal invariant was violated.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),

    #[error("inconsistent candle on {0}: low > high")]
    InconsistentCandle(NaiveDate),

    #[error("date slice {start}..={end} selects no records")]
    EmptySlice { start: NaiveDate, end: NaiveDate },

    #[error("insufficient data: need at least {needed} {what}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("division guard: zero denominator at index {index}")]
    DivisionGuard { index: usize },

    #[error("underdetermined system: {rows} rows for {features} features plus intercept")]
    Underdetermined { rows: usize, features: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("spec error at line {line}, key `{key}`: {message}")]
    Spec {
        key: String,
        line: usize,
        message: String,
    },

    #[error("member {index} ({name}) failed to train: {source}")]
    Member {
        index: usize,
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse { .. }
            | Error::DuplicateDate(_)
            | Error::InconsistentCandle(_)
            | Error::EmptySlice { .. }
            | Error::InsufficientData { .. }
            | Error::DivisionGuard { .. }
            | Error::Underdetermined { .. }
            | Error::Io { .. } => ErrorClass::Data,
            Error::Argument(_) | Error::Spec { .. } => ErrorClass::Argument,
            Error::Invariant(_) => ErrorClass::Internal,
            Error::Member { source, .. } | Error::Stage { source, .. } => source.class(),
        }
    }
}

/// Attach pipeline stage context to an error.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
