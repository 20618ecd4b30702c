use thiserror::Error;

/// Errors surfaced by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside its mathematical domain.
    #[error("domain: {0}")]
    Domain(String),
    /// Mismatched batch sizes or vector dimensions.
    #[error("shape: {0}")]
    Shape(String),
    /// Invalid configuration (bad schema, bad values).
    #[error("config: {0}")]
    Config(String),
    /// Malformed on-disk data (checkpoint, CSV).
    #[error("format: {0}")]
    Format(String),
    /// Numerical failure at runtime (non-finite loss, NaN parameters).
    #[error("numeric: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
