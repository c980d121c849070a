use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EncodedExample;
use crate::parallel::map_ordered;
use crate::tensor::{Gradients, Graph, ParamStore, TensorError};

use super::model::Seq2Seq;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("example {index} has no code-switched target")]
    MissingTarget { index: usize },
    #[error("non-finite loss on example {index}")]
    NonFinite { index: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    /// Multiplier applied when dev loss fails to improve.
    pub lr_decay: f64,
    pub seed: u64,
    /// Worker threads for per-example gradients; results do not depend on it.
    pub threads: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            lr: 1.0,
            clip_norm: 0.25,
            lr_decay: 0.5,
            seed: 0,
            threads: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total_nll: f64,
    pub tokens: usize,
}

impl LossReport {
    pub fn mean_nll(&self) -> f64 {
        self.total_nll / self.tokens.max(1) as f64
    }

    pub fn perplexity(&self) -> f64 {
        self.mean_nll().exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_nll: f64,
    pub dev_nll: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_nll: Option<f64>,
}

fn check_targets(examples: &[EncodedExample]) -> Result<(), TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    match examples.iter().position(|e| e.tgt_ids.is_none()) {
        Some(index) => Err(TrainError::MissingTarget { index }),
        None => Ok(()),
    }
}

fn example_grad(model: &Seq2Seq, store: &ParamStore, ex: &EncodedExample, index: usize) -> Result<(Gradients, f64, usize), TrainError> {
    let mut g = Graph::new();
    let (loss, n) = model.loss(&mut g, store, ex)?;
    let value = g.value(loss).data()[0];
    if !value.is_finite() {
        return Err(TrainError::NonFinite { index });
    }
    Ok((g.backward(loss, store)?, value, n))
}

/// One pass over `examples` in a seeded shuffled order. Each mini-batch
/// takes one SGD step on its per-token mean NLL.
pub fn train_epoch(
    model: &mut Seq2Seq,
    examples: &[EncodedExample],
    opts: &TrainOptions,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<LossReport, TrainError> {
    check_targets(examples)?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    let mut report = LossReport { total_nll: 0.0, tokens: 0 };
    for batch in order.chunks(opts.batch_size.max(1)) {
        let results = {
            let m: &Seq2Seq = model;
            map_ordered(batch, opts.threads, |_, &i| example_grad(m, m.params(), &examples[i], i))
        };
        let mut grads = Gradients::zeros_like(model.params());
        let mut tokens = 0;
        for r in results {
            let (g, loss, n) = r?;
            grads.accumulate(&g);
            report.total_nll += loss;
            tokens += n;
        }
        report.tokens += tokens;
        grads.scale(1.0 / tokens as f64);
        model.params_mut().sgd_step(&grads, lr, opts.clip_norm)?;
    }
    Ok(report)
}

/// Teacher-forced NLL summed over all predicted tokens (EOS included).
pub fn evaluate_nll(model: &Seq2Seq, examples: &[EncodedExample], threads: usize) -> Result<LossReport, TrainError> {
    check_targets(examples)?;
    let results = map_ordered(examples, threads, |i, ex| -> Result<(f64, usize), TrainError> {
        let mut g = Graph::new();
        let (loss, n) = model.loss(&mut g, model.params(), ex)?;
        let v = g.value(loss).data()[0];
        if !v.is_finite() {
            return Err(TrainError::NonFinite { index: i });
        }
        Ok((v, n))
    });
    let mut report = LossReport { total_nll: 0.0, tokens: 0 };
    for r in results {
        let (v, n) = r?;
        report.total_nll += v;
        report.tokens += n;
    }
    Ok(report)
}

/// Full training loop. With a dev set, the learning rate is multiplied by
/// `lr_decay` after every epoch that does not improve dev NLL, and the
/// parameters of the best dev epoch are restored at the end.
pub fn train(
    model: &mut Seq2Seq,
    train_set: &[EncodedExample],
    dev_set: &[EncodedExample],
    opts: &TrainOptions,
) -> Result<TrainReport, TrainError> {
    check_targets(train_set)?;
    if !dev_set.is_empty() {
        check_targets(dev_set)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut lr = opts.lr;
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut epochs = Vec::with_capacity(opts.epochs);
    for epoch in 1..=opts.epochs {
        let tr = train_epoch(model, train_set, opts, lr, &mut rng)?;
        let dev = if dev_set.is_empty() {
            None
        } else {
            Some(evaluate_nll(model, dev_set, opts.threads)?.mean_nll())
        };
        epochs.push(EpochRecord {
            epoch,
            lr,
            train_nll: tr.mean_nll(),
            dev_nll: dev,
        });
        if let Some(d) = dev {
            if best.as_ref().is_none_or(|b| d < b.0) {
                best = Some((d, epoch, model.params().clone()));
            } else {
                lr *= opts.lr_decay;
            }
        }
    }
    let (best_dev_nll, best_epoch) = match best {
        Some((d, e, params)) => {
            *model.params_mut() = params;
            (Some(d), e)
        }
        None => (None, opts.epochs),
    };
    Ok(TrainReport {
        epochs,
        best_epoch,
        best_dev_nll,
    })
}
