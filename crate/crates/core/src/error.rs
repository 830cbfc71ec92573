use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value violates its documented constraints.
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// A value lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an interface contract (lengths, counts, ordering).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Training produced a non-finite loss or gradient.
    #[error("numeric divergence: {0}")]
    Numeric(String),

    /// A serialized model or data file could not be decoded.
    #[error("format error: {0}")]
    Format(String),

    /// Runs being compared cannot be aligned.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}
