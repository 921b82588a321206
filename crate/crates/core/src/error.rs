use std::path::PathBuf;

/// Errors surfaced by the simulator, the learners and the harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("joint {joint} = {value} outside limits [{lo}, {hi}]")]
    JointLimit {
        joint: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("training batch is empty")]
    EmptyBatch,
    #[error("dataset contains a single class")]
    SingleClass,
    #[error("trace contains no usable frames")]
    EmptyTrace,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("malformed file: {0}")]
    Format(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("session: {0}")]
    Session(String),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for configuration problems (CLI exit code 1).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
