use alloc::string::String;

use crate::distances::Metric;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("degenerate input for {metric} distance")]
    DegenerateInput { metric: Metric },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("pair sampling failed: {0}")]
    Sampling(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged: {0}")]
    TrainingDiverged(String),
    #[error("invalid LDA batch: {0}")]
    Batch(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("evaluation error: {0}")]
    Eval(String),
}
