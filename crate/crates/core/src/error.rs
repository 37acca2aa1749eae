use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphemeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("cannot sample {requested} distinct vertices from {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("unknown lineage {0}")]
    UnknownLineage(usize),
    #[error("unknown vertex {0}")]
    UnknownVertex(u64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("negative distance {0}")]
    NegativeDistance(f64),
    #[error("{0}")]
    Infeasible(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("event not applicable: {0}")]
    NotApplicable(String),
    #[error("no absorption after {0} events")]
    NonTermination(u64),
    #[error("empty sample")]
    EmptySample,
}

pub type Result<T> = std::result::Result<T, GraphemeError>;
