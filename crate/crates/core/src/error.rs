use thiserror::Error;

use crate::routing::Midpoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("topology is not strongly connected")]
    Disconnected,

    #[error("link {0}->{1} not found")]
    LinkNotFound(usize, usize),

    #[error("invalid midpoint {midpoint} for demand {src}->{dst}")]
    InvalidMidpoint {
        src: usize,
        dst: usize,
        midpoint: Midpoint,
    },

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("invalid traffic matrix: {0}")]
    InvalidTrafficMatrix(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("could not produce {count} distinct connected variants with {k} failed link pairs")]
    FailuresExhausted { k: usize, count: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite training state at episode {episode}: {detail}")]
    NonFinite { episode: usize, detail: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
