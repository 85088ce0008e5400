use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dataset empty after {0}-core")]
    EmptyAfterCore(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite loss in batch {batch}: {components}")]
    NonFiniteLoss { batch: usize, components: String },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("plot error: {0}")]
    Plot(String),

    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used by the command line error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::EmptyAfterCore(_) | Error::Empty(_) => "empty",
            Error::IndexOutOfRange { .. } => "index",
            Error::Precondition(_) => "precondition",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::Checkpoint(_) => "checkpoint",
            Error::Plot(_) => "plot",
            Error::Tensor(_) => "tensor",
            Error::Json(_) => "json",
        }
    }
}
