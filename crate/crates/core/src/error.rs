use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::summarizer::SummarizerError;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConfigError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("embedding size {dim} is not divisible by head count {heads}")]
    HeadSplit { dim: usize, heads: usize },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Model(#[from] SummarizerError),
    #[error("loss became non-finite ({value}) in epoch {epoch}")]
    NaN { epoch: usize, value: f64 },
}
