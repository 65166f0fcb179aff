use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node {node} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { node: usize, num_nodes: usize },

    #[error("edge ({0}, {1}) not present in graph")]
    EdgeNotFound(usize, usize),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("index {index} out of range {bound} in {what}")]
    IndexOutOfRange {
        what: String,
        index: usize,
        bound: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("{path}:{line}: malformed record: {msg}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unknown task spec `{0}`")]
    UnknownTask(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier, used by the CLI for its diagnostic prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGraph(_) => "invalid-graph",
            Error::NodeOutOfRange { .. } => "node-out-of-range",
            Error::EdgeNotFound(..) => "edge-not-found",
            Error::Shape { .. } => "shape",
            Error::IndexOutOfRange { .. } => "index-out-of-range",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::ManifestMismatch(_) => "manifest-mismatch",
            Error::MalformedRecord { .. } => "malformed-record",
            Error::UnknownTask(_) => "unknown-task",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
