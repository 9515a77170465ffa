use alloc::string::String;

/// Errors raised anywhere in the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("vertex {vertex} out of range for a graph of {vertex_count} vertices")]
    VertexOutOfRange { vertex: u64, vertex_count: usize },
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(u32, u32),
    #[error("self-loop on vertex {0}")]
    SelfLoop(u32),
    #[error("expected {expected} values, found {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("requested {requested} edges but a simple graph on these vertices holds at most {max}")]
    TooManyEdges { requested: u64, max: u64 },
    #[error("cannot sample {requested} vertices from a graph of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("no activation available for vertex {0}")]
    MissingActivation(u32),
    #[error("dimension mismatch: expected {expected}, found {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("no attention coefficient for edge ({0}, {1})")]
    MissingAttention(u32, u32),
    #[error("activation vector is empty")]
    EmptyVector,
    #[error("design matrix is rank-deficient")]
    RankDeficient,
    #[error("need at least {needed} observations, found {found}")]
    TooFewObservations { needed: usize, found: usize },
    #[error("latency prediction {0} ms is not positive")]
    NonPositivePrediction(f64),
    #[error("measured time {time} ms for fog {fog} is not positive")]
    NonPositiveTime { fog: usize, time: f64 },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("unsupported bitwidth {0}")]
    UnsupportedBitwidth(u32),
    #[error("invalid quantization plan: {0}")]
    InvalidQuantPlan(&'static str),
    #[error("codec failure: {0}")]
    Codec(String),
    #[error("malformed packed stream: {0}")]
    MalformedStream(&'static str),
    #[error("cannot split {vertices} vertices into {parts} partitions")]
    TooManyParts { parts: usize, vertices: usize },
    #[error("fog cluster is empty")]
    EmptyCluster,
    #[error("invalid placement: {0}")]
    InvalidPlacement(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
