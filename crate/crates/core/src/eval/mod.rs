//! Scoring and corpus analysis: BLEU, code-switching statistics and n-gram
//! frequency histograms.

mod bleu;
mod ngram;
mod stats;

use thiserror::Error;

pub use bleu::{bleu, BleuReport};
pub use ngram::{ngram_histogram, NGramHistogram};
pub use stats::{corpus_stats, segment_lengths, CorpusStats};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order {0} not in 1..=4")]
    BadOrder(usize),
}
