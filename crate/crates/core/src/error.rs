use std::path::PathBuf;

/// Errors produced by graph construction, diffusion, and the evaluation harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("({i}, {j}) is not an edge of the graph")]
    NotAnEdge { i: usize, j: usize },

    #[error("numerical divergence at step {step} with delta = {delta}; try a smaller step size")]
    Divergence { step: usize, delta: f64 },

    #[error("connected component containing nodes {nodes:?} has no labeled node")]
    UnlabeledComponent { nodes: Vec<usize> },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
