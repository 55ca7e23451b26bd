use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("graph is empty")]
    EmptyGraph,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("graph with {nodes} nodes is too large for brute force (limit {limit})")]
    TooLargeForBruteForce { nodes: usize, limit: usize },

    #[error("invalid probability {0}")]
    InvalidProbability(f64),

    #[error("degenerate co-attention vector (norm {norm:e})")]
    DegenerateCoAttention { norm: f64 },

    #[error("zero projection vector in node scorer")]
    ZeroProjection,

    #[error("graph with {nodes} nodes exceeds the exact GED node budget of {budget}")]
    GedBudgetExceeded { nodes: usize, budget: usize },

    #[error("exact GED search aborted after {expanded} expanded states")]
    GedSearchAborted { expanded: u64 },

    #[error("loss is not a scalar (shape {rows}x{cols})")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("negative sampler exhausted {retries} retries")]
    SamplerExhausted { retries: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (parameter norms: {norms})")]
    NanLoss {
        epoch: usize,
        batch: usize,
        norms: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
