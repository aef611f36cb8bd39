use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("node {0} is not in the environment")]
    UnknownNode(usize),
    #[error("no path from node {from} to node {to}")]
    Unreachable { from: usize, to: usize },
    #[error("index {index} out of range (limit {limit}) in {what}")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("environment generation failed: {0}")]
    Generation(String),
    #[error("unsupported {kind} schema version {found} (expected {expected})")]
    Format {
        kind: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
