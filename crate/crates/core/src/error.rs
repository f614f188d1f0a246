use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),
    #[error("region out of bounds: {0}")]
    RegionBounds(String),
    #[error("overlapping raster writes at destination offset {0}")]
    Overlap(usize),
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("axis {axis} out of range for rank {rank}")]
    Axis { axis: usize, rank: usize },
    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("graph contains a cycle")]
    CyclicGraph,
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("mode error: {0}")]
    Mode(String),
    #[error("while loop exceeded {0} iterations")]
    RunawayLoop(usize),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("operator `{op}` is not supported on backend `{backend}`")]
    UnsupportedOnBackend { op: String, backend: String },
    #[error("no backend in the catalog supports the operator sequence")]
    NoBackend,
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
