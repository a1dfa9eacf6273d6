use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid arguments: bad shapes, out-of-range ranks, unsupported bit widths.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A file or in-memory container does not match its layout.
    #[error("format error: {0}")]
    Format(String),

    /// No assignment fits in the requested storage budget.
    #[error("infeasible budget: {budget_bits} bits requested, at least {min_storage_bits} bits required")]
    Infeasible {
        budget_bits: f64,
        min_storage_bits: f64,
    },

    /// Exhaustive search refused because the instance is too large.
    #[error("instance too large for exhaustive search: {0} assignments")]
    TooLarge(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Reclassifies argument errors found while decoding stored data as format errors.
    pub(crate) fn into_format(self) -> Self {
        match self {
            Error::Argument(m) | Error::Format(m) => Error::Format(m),
            other => other,
        }
    }

    /// [`Error::into_format`], prefixed with the offending file.
    pub(crate) fn in_file(self, path: &std::path::Path) -> Self {
        match self.into_format() {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            Error::Json(e) => Error::Format(format!("{}: {e}", path.display())),
            other => other,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
