use thiserror::Error;

/// Errors surfaced by the library. `Usage` covers malformed requests and
/// inputs, `Numeric` covers non-finite values detected during training,
/// and `Format` covers unreadable on-disk artifacts.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("numerical failure in {0}")]
    Numeric(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
