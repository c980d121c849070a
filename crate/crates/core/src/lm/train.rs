use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{LmConfig, LmModel, LmState};
use super::perplexity::perplexity;
use super::LmError;
use crate::corpus::EOS;
use crate::tensor::Graph;

/// Utterances as word ids, with an optional per-token POS id sidecar.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LmData {
    pub sentences: Vec<Vec<usize>>,
    pub pos: Option<Vec<Vec<usize>>>,
}

impl LmData {
    pub fn new(sentences: Vec<Vec<usize>>, pos: Option<Vec<Vec<usize>>>) -> Result<Self, LmError> {
        if let Some(p) = &pos {
            if p.len() != sentences.len() {
                return Err(LmError::LengthMismatch {
                    line: p.len().min(sentences.len()) + 1,
                    words: sentences.len(),
                    tags: p.len(),
                });
            }
            for (i, (s, t)) in sentences.iter().zip(p).enumerate() {
                if s.len() != t.len() {
                    return Err(LmError::LengthMismatch {
                        line: i + 1,
                        words: s.len(),
                        tags: t.len(),
                    });
                }
            }
        }
        Ok(Self { sentences, pos })
    }

    pub fn without_pos(&self) -> Self {
        Self {
            sentences: self.sentences.clone(),
            pos: None,
        }
    }

    pub fn tokens(&self) -> usize {
        self.sentences.iter().map(|s| s.len() + 1).sum()
    }
}

/// Lays the corpus out as one stream `EOS w.. EOS w.. EOS` and cuts it into
/// `batch` parallel columns, returned time-major (`[t][b]`). The tail that
/// does not fill a full row is dropped.
pub fn batchify(data: &LmData, batch: usize) -> (Vec<Vec<usize>>, Option<Vec<Vec<usize>>>) {
    let mut words = vec![EOS];
    let mut tags = vec![EOS];
    for (i, s) in data.sentences.iter().enumerate() {
        words.extend(s);
        words.push(EOS);
        if let Some(p) = &data.pos {
            tags.extend(&p[i]);
            tags.push(EOS);
        }
    }
    let batch = batch.max(1).min((words.len() / 2).max(1));
    let len = words.len() / batch;
    let layout = |s: &[usize]| -> Vec<Vec<usize>> { (0..len).map(|t| (0..batch).map(|b| s[b * len + t]).collect()).collect() };
    (layout(&words), data.pos.as_ref().map(|_| layout(&tags)))
}

/// Multiplies the rate by `decay` after every epoch whose dev perplexity
/// is not a new best.
#[derive(Clone, Debug, PartialEq)]
pub struct LrSchedule {
    pub lr: f64,
    pub decay: f64,
    pub best: Option<f64>,
}

impl LrSchedule {
    pub fn new(lr: f64, decay: f64) -> Self {
        Self { lr, decay, best: None }
    }

    /// Records an epoch's dev perplexity; returns whether it improved.
    pub fn observe(&mut self, dev_ppl: f64) -> bool {
        if self.best.is_none_or(|b| dev_ppl < b) {
            self.best = Some(dev_ppl);
            true
        } else {
            self.lr *= self.decay;
            false
        }
    }
}

/// Learning rate used in each epoch given the dev perplexities observed
/// after each one (one more entry than `dev_ppls`).
pub fn lr_trace(lr_init: f64, decay: f64, dev_ppls: &[f64]) -> Vec<f64> {
    let mut s = LrSchedule::new(lr_init, decay);
    let mut out = vec![s.lr];
    for &d in dev_ppls {
        s.observe(d);
        out.push(s.lr);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmTrainOptions {
    pub epochs: usize,
    pub bptt: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub clip_norm: f64,
    /// Seeds dropout masks.
    pub seed: u64,
    /// Evaluation workers.
    pub threads: usize,
}

impl Default for LmTrainOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            bptt: 35,
            batch_size: 20,
            lr: 20.0,
            lr_decay: 0.75,
            clip_norm: 0.25,
            seed: 0,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmEpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_ppl: f64,
    pub dev_ppl: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmTrainReport {
    pub lr_init: f64,
    pub epochs: Vec<LmEpochRecord>,
    pub best_epoch: usize,
    pub best_dev_ppl: Option<f64>,
}

impl LmTrainReport {
    /// `epoch<TAB>lr<TAB>train_ppl<TAB>dev_ppl` lines.
    pub fn log_lines(&self) -> String {
        self.epochs
            .iter()
            .map(|e| {
                let dev = e.dev_ppl.map_or_else(|| "-".to_string(), |d| format!("{d:.4}"));
                format!("{}\t{}\t{:.4}\t{}\n", e.epoch, e.lr, e.train_ppl, dev)
            })
            .collect()
    }
}

fn train_epoch(
    model: &mut LmModel,
    words: &[Vec<usize>],
    tags: Option<&[Vec<usize>]>,
    opts: &LmTrainOptions,
    lr: f64,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<f64, LmError> {
    let batch = words[0].len();
    let mut state = LmState::zeros(&model.config, batch);
    let (mut nll, mut count) = (0.0, 0usize);
    let mut t = 0;
    while t + 1 < words.len() {
        let k = opts.bptt.max(1).min(words.len() - 1 - t);
        let inputs = &words[t..t + k];
        let targets = &words[t + 1..t + k + 1];
        let pos = tags.map(|p| &p[t..t + k]);
        let mut g = Graph::new();
        let (loss, next) = model.chunk_loss(&mut g, model.params(), inputs, pos, targets, &state, Some(rng))?;
        let value = g.value(loss).data()[0];
        if !value.is_finite() {
            return Err(LmError::NonFinite { epoch });
        }
        let grads = g.backward(loss, model.params())?;
        model.params_mut().sgd_step(&grads, lr, opts.clip_norm)?;
        nll += value * (k * batch) as f64;
        count += k * batch;
        state = next;
        t += k;
    }
    Ok((nll / count.max(1) as f64).exp())
}

/// Truncated-BPTT training with the dev-driven decay schedule. The
/// parameters of the best dev epoch are restored at the end.
pub fn train_lm(config: LmConfig, train: &LmData, dev: Option<&LmData>, opts: &LmTrainOptions) -> Result<(LmModel, LmTrainReport), LmError> {
    if train.sentences.is_empty() || dev.is_some_and(|d| d.sentences.is_empty()) {
        return Err(LmError::EmptyCorpus);
    }
    if config.has_pos() != train.pos.is_some() {
        return Err(if config.has_pos() { LmError::MissingPos } else { LmError::UnexpectedPos });
    }
    let mut model = LmModel::new(config)?;
    let (words, tags) = batchify(train, opts.batch_size);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut schedule = LrSchedule::new(opts.lr, opts.lr_decay);
    let mut best = None;
    let mut records = Vec::with_capacity(opts.epochs);
    for epoch in 1..=opts.epochs {
        let lr = schedule.lr;
        let train_ppl = train_epoch(&mut model, &words, tags.as_deref(), opts, lr, &mut rng, epoch)?;
        let dev_ppl = match dev {
            Some(d) => Some(perplexity(&model, d, opts.threads)?.perplexity()),
            None => None,
        };
        if let Some(d) = dev_ppl {
            if !d.is_finite() {
                return Err(LmError::NonFinite { epoch });
            }
            if schedule.observe(d) {
                best = Some((epoch, d, model.params().clone()));
            }
        }
        records.push(LmEpochRecord { epoch, lr, train_ppl, dev_ppl });
    }
    let (best_epoch, best_dev_ppl) = match best {
        Some((e, d, params)) => {
            *model.params_mut() = params;
            (e, Some(d))
        }
        None => (opts.epochs, None),
    };
    Ok((
        model,
        LmTrainReport {
            lr_init: opts.lr,
            epochs: records,
            best_epoch,
            best_dev_ppl,
        },
    ))
}

/// Trains once per initial rate and keeps the run with the lowest best dev
/// perplexity (earlier rate on ties).
pub fn train_lm_with_lr_search(
    config: LmConfig,
    train: &LmData,
    dev: &LmData,
    opts: &LmTrainOptions,
    rates: &[f64],
) -> Result<(LmModel, LmTrainReport), LmError> {
    let mut best: Option<(LmModel, LmTrainReport)> = None;
    for &lr in rates {
        let o = LmTrainOptions { lr, ..opts.clone() };
        let run = train_lm(config.clone(), train, Some(dev), &o)?;
        let better = match &best {
            None => true,
            Some((_, r)) => run.1.best_dev_ppl < r.best_dev_ppl,
        };
        if better {
            best = Some(run);
        }
    }
    best.ok_or_else(|| LmError::Config("no learning rates given".into()))
}
