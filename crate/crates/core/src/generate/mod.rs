//! Code-switched sentence generators that work from word alignments, and
//! assembly of augmented corpora.

mod assemble;
mod equivalence;
mod nbest;
mod random;

use serde::{Deserialize, Serialize};

pub use assemble::{assemble_augmented_corpus, assemble_available, AssembleError, AugmentedCorpus, Policy, Provenance};
pub use equivalence::{equivalence_generate, permitted_boundaries, sample_quota, DEFAULT_MAX_OUTPUTS};
pub use nbest::{format_nbest_line, parse_nbest, read_nbest, write_nbest, NbestEntry};
pub use random::random_switch_generate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    L1,
    L2,
}

/// A mixed sentence with the side each token was copied from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SwitchCandidate {
    pub tokens: Vec<String>,
    pub source_of: Vec<Side>,
    /// Output positions where the side changes.
    pub segmentation: Vec<usize>,
}

impl SwitchCandidate {
    pub fn from_parts(parts: Vec<(String, Side)>) -> Self {
        let (tokens, source_of): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
        let segmentation = (1..source_of.len()).filter(|&k| source_of[k] != source_of[k - 1]).collect();
        Self {
            tokens,
            source_of,
            segmentation,
        }
    }

    pub fn switches(&self) -> usize {
        self.segmentation.len()
    }

    pub fn is_mixed(&self) -> bool {
        !self.segmentation.is_empty()
    }
}
