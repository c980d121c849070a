//! Recurrent language model with tied input/output word embeddings and an
//! optional part-of-speech input channel.

mod model;
mod perplexity;
mod train;

use thiserror::Error;

use crate::tensor::TensorError;

pub use model::{LmConfig, LmModel, LmState};
pub use perplexity::{perplexity, PerplexityReport, TokenPredictor, UniformPredictor};
pub use train::{batchify, lr_trace, train_lm, train_lm_with_lr_search, LmData, LmEpochRecord, LmTrainOptions, LmTrainReport, LrSchedule};

#[derive(Debug, Error)]
pub enum LmError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("line {line}: {words} words but {tags} tags")]
    LengthMismatch { line: usize, words: usize, tags: usize },
    #[error("model has no POS channel but POS ids were supplied")]
    UnexpectedPos,
    #[error("model has a POS channel but no POS ids were supplied")]
    MissingPos,
    #[error("id {id} outside vocabulary of size {size}")]
    IdOutOfRange { id: usize, size: usize },
    #[error("non-finite loss in epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
