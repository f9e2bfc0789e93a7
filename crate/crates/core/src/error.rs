use std::path::PathBuf;

/// Errors raised by the toolkit.
///
/// The variants mirror the failure classes the CLI maps onto exit codes:
/// input problems (`Format`, `Value`, `Shape`, `Size`, `Capability`, `Io`)
/// exit with 1, `Numerical` exits with 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("shape mismatch: expected {expected} rows, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("operation not supported: {0}")]
    Capability(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("problem too large: {0}")]
    Size(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn value(msg: impl Into<String>) -> Self {
        Error::Value(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Numerical(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
