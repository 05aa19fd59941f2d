use thiserror::Error;

/// Errors raised by the workbench library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("infeasible split: class {class} has {available} nodes, {requested} requested")]
    InfeasibleSplit {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("training mask is empty")]
    EmptyMask,

    #[error("weight matrix {0} has zero spectral norm")]
    DegenerateWeight(String),

    #[error("boundary set is empty")]
    EmptyBoundary,

    #[error("signature indices are not strictly increasing")]
    UnsortedIndices,

    #[error("embedding width mismatch: suspect {suspect}, reference {reference}")]
    DimMismatch { suspect: usize, reference: usize },

    #[error("point sets differ in size: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("bound hypothesis violated: eta {eta} exceeds 1/L = {limit}")]
    HypothesisViolated { eta: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
