use serde::{Deserialize, Serialize};

use super::model::{LmModel, LmState};
use super::train::LmData;
use super::LmError;
use crate::corpus::EOS;
use crate::parallel::map_ordered;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub tokens: usize,
    /// Nats.
    pub total_nll: f64,
}

impl PerplexityReport {
    pub fn perplexity(&self) -> f64 {
        (self.total_nll / self.tokens.max(1) as f64).exp()
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            tokens: self.tokens + other.tokens,
            total_nll: self.total_nll + other.total_nll,
        }
    }
}

/// Anything that assigns next-token probabilities. Utterances are scored
/// from a fresh state with EOS as the first input and the last target.
pub trait TokenPredictor: Sync {
    type State;

    fn initial(&self) -> Self::State;

    /// Probabilities over the vocabulary after reading `word`.
    fn step(&self, state: &Self::State, word: usize, pos: Option<usize>) -> Result<(Vec<f64>, Self::State), LmError>;

    /// `(Σ −ln p, predicted tokens)` for one utterance.
    fn utterance_nll(&self, words: &[usize], pos: Option<&[usize]>) -> Result<(f64, usize), LmError> {
        let mut state = self.initial();
        let mut prev = (EOS, pos.map(|_| EOS));
        let mut nll = 0.0;
        for (t, &w) in words.iter().chain(std::iter::once(&EOS)).enumerate() {
            let (p, next) = self.step(&state, prev.0, prev.1)?;
            nll -= p[w].ln();
            state = next;
            prev = (w, pos.map(|p| p.get(t).copied().unwrap_or(EOS)));
        }
        Ok((nll, words.len() + 1))
    }
}

/// Every word equally likely.
#[derive(Clone, Copy, Debug)]
pub struct UniformPredictor {
    pub vocab_size: usize,
}

impl TokenPredictor for UniformPredictor {
    type State = ();

    fn initial(&self) {}

    fn step(&self, _: &(), _: usize, _: Option<usize>) -> Result<(Vec<f64>, ()), LmError> {
        Ok((vec![1.0 / self.vocab_size as f64; self.vocab_size], ()))
    }
}

impl TokenPredictor for LmModel {
    type State = LmState;

    fn initial(&self) -> LmState {
        LmState::zeros(&self.config, 1)
    }

    fn step(&self, state: &LmState, word: usize, pos: Option<usize>) -> Result<(Vec<f64>, LmState), LmError> {
        self.next_word_distribution(state, word, pos)
    }

    fn utterance_nll(&self, words: &[usize], pos: Option<&[usize]>) -> Result<(f64, usize), LmError> {
        LmModel::utterance_nll(self, words, pos, EOS, EOS)
    }
}

/// Corpus perplexity with EOS counted once per utterance.
pub fn perplexity<P: TokenPredictor>(model: &P, data: &LmData, threads: usize) -> Result<PerplexityReport, LmError> {
    if data.sentences.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    let idx: Vec<usize> = (0..data.sentences.len()).collect();
    let parts = map_ordered(&idx, threads, |_, &i| {
        model.utterance_nll(&data.sentences[i], data.pos.as_ref().map(|p| p[i].as_slice()))
    });
    let mut report = PerplexityReport::default();
    for p in parts {
        let (nll, n) = p?;
        report.total_nll += nll;
        report.tokens += n;
    }
    Ok(report)
}
