//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type. Variants distinguish caller mistakes (config, usage)
/// from internal failures (invariant violations, non-finite numerics).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration: bad dimensions, out-of-range hyperparameters,
    /// incompatible parameter vectors.
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse: e.g. asking for the gradient of a non-scalar node.
    #[error("usage error: {0}")]
    Usage(String),

    /// A runtime invariant failed to hold.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// Operation not supported by the autodiff engine in this context.
    #[error("unsupported operation: {0}")]
    UnsupportedOp(String),

    /// NaN or infinity appeared where finite values are required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Filesystem failure, annotated with the offending path.
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Serialization or deserialization failure.
    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    /// Shorthand for a [`Error::Config`] with a formatted message.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Shorthand for a [`Error::Usage`] with a formatted message.
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Wrap an io error with its path for context.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
