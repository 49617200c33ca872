//! Block-wise AST splitting for neural code summarization.

pub mod autodiff;
pub mod cfg;
pub mod dominators;
mod error;
pub mod frontend;
pub mod metrics;
pub mod pipeline;
pub mod splitter;
pub mod summarizer;
pub mod syntax_encoder;
#[doc(hidden)]
pub mod testing;

pub use error::{ConfigError, TrainError};
