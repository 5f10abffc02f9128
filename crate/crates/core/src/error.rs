use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("degenerate map: diagonal partial of component {component} is not positive at sample {sample}")]
    DegenerateMap { sample: usize, component: usize },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("ill-conditioned matrix: {0}")]
    Conditioning(String),

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    #[error("fit failed on subset {subset:?}: {source}")]
    Subset {
        subset: Vec<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("ordering {ordering:?}: {source}")]
    Ordering {
        ordering: Vec<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("generation failed at node {node}: {reason}")]
    Generation { node: usize, reason: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
