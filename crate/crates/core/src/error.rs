use thiserror::Error;

/// Errors raised anywhere in the receiver, executor or harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Inputs are well formed but carry no usable information (e.g. all-zero correlators).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("channel {channel}: {source}")]
    Channel {
        channel: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("resource error: {0}")]
    Resource(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// Wraps this error with the channel that produced it.
    pub fn in_channel(self, channel: u32) -> Self {
        match self {
            e @ Error::Channel { .. } => e,
            e => Error::Channel {
                channel,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
