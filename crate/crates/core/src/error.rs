use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate quantization range [{alpha}, {beta}]")]
    DegenerateRange { alpha: f64, beta: f64 },

    #[error("invalid signal: {0}")]
    Signal(String),

    #[error("wav: {0}")]
    Wav(String),

    #[error("weight container: {0}")]
    Container(String),

    #[error("chunk {index}: {source}")]
    Stream {
        index: usize,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
