use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mechanisms contain a cycle through {0:?}")]
    Cycle(Vec<String>),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown SCM `{0}`")]
    UnknownScm(String),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("expression parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("variable is not part of the recorded graph or is not a scalar")]
    GraphNotRecorded,
    #[error("conditioning group width mismatch: {0}")]
    GroupWidthMismatch(String),
    #[error("{got} groups exceed the concatenation capacity of {max}")]
    TooManyGroups { got: usize, max: usize },
    #[error("non-finite training loss in epoch {epoch}, batch {batch}: {skipped} of {seen} examples skipped")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        skipped: usize,
        seen: usize,
    },
    #[error("at least 2 runs per event are required, got {0}")]
    InsufficientRuns(usize),
    #[error("empty input")]
    EmptyInput,
    #[error("unsupported query: {0}")]
    UnsupportedQuery(String),
    #[error("denominator estimate {estimate} is indistinguishable from zero (sigma {sigma})")]
    DivisionNearZero { estimate: f64, sigma: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable tag used in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Cycle(_) => "cycle",
            Error::UnknownVariable(_) => "unknown_variable",
            Error::UnknownScm(_) => "unknown_scm",
            Error::DomainMismatch(_) => "domain_mismatch",
            Error::Parse { .. } => "parse",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::GraphNotRecorded => "graph_not_recorded",
            Error::GroupWidthMismatch(_) => "group_width_mismatch",
            Error::TooManyGroups { .. } => "too_many_groups",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::InsufficientRuns(_) => "insufficient_runs",
            Error::EmptyInput => "empty_input",
            Error::UnsupportedQuery(_) => "unsupported_query",
            Error::DivisionNearZero { .. } => "division_near_zero",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Verification(_) => "verification",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
