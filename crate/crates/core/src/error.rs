use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error at byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error("{path}: checksum mismatch (manifest {expected}, file {actual})")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("{context}: {message}")]
    Format { context: String, message: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: {diagnostics}")]
    Diverged {
        epoch: usize,
        batch: usize,
        diagnostics: String,
    },

    #[error("refusing to overwrite {0} (pass --force)")]
    OutputExists(PathBuf),
}

impl Error {
    /// Stable, machine-parsable error class used by the CLI.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InvalidState(_) => "invalid-state",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Checksum { .. } => "checksum",
            Error::Format { .. } => "format",
            Error::Diverged { .. } => "diverged",
            Error::OutputExists(_) => "output-exists",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Format {
            context: context.into(),
            message: message.to_string(),
        }
    }
}

macro_rules! invalid_arg {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(format!($($arg)*))
    };
}
pub(crate) use invalid_arg;
