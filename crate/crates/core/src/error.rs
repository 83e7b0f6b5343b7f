use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure reading the edge-list text format. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("malformed line {0:?}")]
    Malformed(String),
    #[error("missing `l=<count>` header before first edge")]
    MissingHeader,
    #[error("duplicate `l=` header")]
    DuplicateHeader,
    #[error("node count must be positive")]
    EmptyGraph,
    #[error("node index {index} out of range for {node_count} nodes")]
    OutOfRange { index: usize, node_count: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
}

/// A node tried to send to something that is not one of its neighbors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("protocol violation in round {round}: node {sender} sent to non-neighbor {recipient}")]
pub struct ProtocolViolation {
    pub sender: usize,
    pub recipient: usize,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Protocol(#[from] ProtocolViolation),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("graph is disconnected: {unreached} node(s) never activated")]
    Disconnected { unreached: usize },
    #[error("node {node} received label information from {count} neighbors; input is not a tree")]
    MultipleLabels { node: usize, count: usize },
    #[error("invalid simplest bipartite graph: {0}")]
    InvalidBipartition(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("linear solve failed: {0}")]
    Factorization(String),
    #[error("unsupported objective: {0}")]
    Unsupported(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
