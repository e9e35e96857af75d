use thiserror::Error;

/// Errors raised by the library. Mathematical negatives (a failed inequality,
/// an infeasible matching) are returned as data, never as errors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid step function: {0}")]
    InvalidStepFn(String),
    #[error("partition is not a refinement of the function's partition")]
    NotARefinement,
    #[error("sequence is not increasing at position {0}")]
    NotIncreasing(usize),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    #[error("condition failed: {0}")]
    ConditionFailed(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unsupported system: {0}")]
    UnsupportedSystem(String),
    #[error("undecidable comparison: {0}")]
    Undecidable(String),
    #[error("stage exhausted at stage {0}")]
    StageExhausted(usize),
    #[error("prerequisite failed: {0}")]
    PrerequisiteFailed(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
