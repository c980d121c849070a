use thiserror::Error;

use crate::tensor::TensorError;

/// One decoder as seen by search: a start state and a step function
/// returning log-probabilities over the output space.
pub trait StepModel {
    type State: Clone;

    fn start(&mut self) -> Result<Self::State, TensorError>;
    fn bos(&self) -> usize;
    fn eos(&self) -> usize;
    fn step(&mut self, state: &Self::State, prev: usize) -> Result<(Vec<f64>, Self::State), TensorError>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis<S> {
    /// Emitted ids, including the final EOS when the hypothesis completed
    /// normally.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub state: S,
}

impl<S> Hypothesis<S> {
    /// Tokens with the trailing EOS removed.
    pub fn content(&self, eos: usize) -> &[usize] {
        match self.tokens.last() {
            Some(&t) if t == eos => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

#[derive(Debug, Error)]
pub enum BeamError {
    #[error("n_best {n_best} exceeds beam size {beam_size}")]
    NBestTooLarge { n_best: usize, beam_size: usize },
    #[error("beam size and n_best must be at least 1")]
    Empty,
    #[error(transparent)]
    Model(#[from] TensorError),
}

fn last_token<M: StepModel>(model: &M, tokens: &[usize]) -> usize {
    tokens.last().copied().unwrap_or_else(|| model.bos())
}

/// Length-bounded beam search ranked by total log-probability.
///
/// Every EOS extension of a live hypothesis is recorded as completed; the
/// non-EOS extensions refill the beam. Search stops once `beam_size`
/// hypotheses are complete and no live one can still beat them (scores
/// only fall as tokens are added), or at `max_len` tokens, where whatever
/// is still live is completed as is. Equal scores keep completion order.
pub fn beam_search<M: StepModel>(
    model: &mut M,
    beam_size: usize,
    n_best: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis<M::State>>, BeamError> {
    if beam_size == 0 || n_best == 0 {
        return Err(BeamError::Empty);
    }
    if n_best > beam_size {
        return Err(BeamError::NBestTooLarge { n_best, beam_size });
    }
    let eos = model.eos();
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: model.start()?,
    }];
    let mut completed: Vec<Hypothesis<M::State>> = Vec::new();

    for _ in 0..max_len.max(1) {
        let mut candidates = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        for (h, hyp) in live.iter().enumerate() {
            let (log_probs, next) = model.step(&hyp.state, last_token(model, &hyp.tokens))?;
            for (w, lp) in log_probs.into_iter().enumerate() {
                if lp > f64::NEG_INFINITY {
                    candidates.push((hyp.log_prob + lp, h, w));
                }
            }
            next_states.push(next);
        }
        // Stable: equal scores keep parent then token order.
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0));

        let mut next_live = Vec::with_capacity(beam_size);
        for (score, h, w) in candidates {
            let mut tokens = live[h].tokens.clone();
            tokens.push(w);
            let hyp = Hypothesis {
                tokens,
                log_prob: score,
                state: next_states[h].clone(),
            };
            if w == eos {
                completed.push(hyp);
            } else if next_live.len() < beam_size {
                next_live.push(hyp);
            } else if completed.len() >= beam_size {
                break;
            }
        }
        live = next_live;

        completed.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
        let done = live.is_empty()
            || (completed.len() >= beam_size && live[0].log_prob <= completed[beam_size - 1].log_prob);
        if done {
            live.clear();
            break;
        }
    }
    completed.extend(live);
    completed.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
    completed.truncate(n_best);
    Ok(completed)
}

/// Argmax decoding; ties go to the lowest id.
pub fn greedy_decode<M: StepModel>(model: &mut M, max_len: usize) -> Result<Hypothesis<M::State>, TensorError> {
    let eos = model.eos();
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: model.start()?,
    };
    for _ in 0..max_len.max(1) {
        let (log_probs, next) = model.step(&hyp.state, last_token(model, &hyp.tokens))?;
        let (w, lp) = log_probs
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (w, lp)| if lp > best.1 { (w, lp) } else { best });
        hyp.tokens.push(w);
        hyp.log_prob += lp;
        hyp.state = next;
        if w == eos {
            break;
        }
    }
    Ok(hyp)
}
