use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid gpu count {requested}: model '{model}' needs {gpus_per_replica} gpus per replica")]
    InvalidGpuCount {
        requested: u32,
        gpus_per_replica: u32,
        model: String,
    },

    #[error("feature dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("candidate set is empty")]
    EmptyInput,

    #[error("evaluation set is empty")]
    EmptyEvalSet,

    #[error("prompt index is empty")]
    EmptyIndex,

    #[error("k={k} exceeds the candidate count {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("cluster needs at least two members for replacement")]
    ClusterTooSmall,

    #[error("per-eval cost must be positive, got {0}")]
    NonPositiveEvalCost(f64),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error("malformed trace at line {line}: {msg}")]
    MalformedTrace { line: usize, msg: String },

    #[error("unknown knob '{0}'")]
    UnknownKnob(String),

    #[error("unknown policy '{0}' (expected prompttuner, infless_like or elasticflow_like)")]
    UnknownPolicy(String),

    #[error("simulation invariant breach: {msg}")]
    InvariantBreach {
        msg: String,
        /// Tail of the event log at the moment of the breach, for dumping.
        event_log: Vec<String>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
