use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LmError;
use crate::nn::{BoundCell, CellKind, CellState, RecurrentCell};
use crate::tensor::{Graph, NodeId, ParamId, ParamStore, Tensor, TensorError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub vocab_size: usize,
    /// Tag inventory size; ignored when `pos_embed_dim` is 0.
    pub pos_vocab_size: usize,
    #[serde(with = "cell_kind")]
    pub cell: CellKind,
    pub layers: usize,
    /// Also the word embedding width, since input and output are tied.
    pub hidden: usize,
    /// 0 disables the POS channel.
    pub pos_embed_dim: usize,
    pub dropout: f64,
    pub seed: u64,
}

mod cell_kind {
    use super::CellKind;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &CellKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match k {
            CellKind::Lstm => "lstm",
            CellKind::SimpleRnn => "simple-rnn",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CellKind, D::Error> {
        match String::deserialize(d)?.as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "simple-rnn" => Ok(CellKind::SimpleRnn),
            other => Err(serde::de::Error::custom(format!("unknown cell `{other}`"))),
        }
    }
}

impl LmConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            pos_vocab_size: 0,
            cell: CellKind::Lstm,
            layers: 2,
            hidden: 500,
            pos_embed_dim: 0,
            dropout: 0.3,
            seed: 0,
        }
    }

    pub fn with_pos(mut self, pos_vocab_size: usize, pos_embed_dim: usize) -> Self {
        self.pos_vocab_size = pos_vocab_size;
        self.pos_embed_dim = pos_embed_dim;
        self
    }

    pub fn has_pos(&self) -> bool {
        self.pos_embed_dim > 0
    }

    /// Width of the first recurrent layer's input.
    pub fn input_width(&self) -> usize {
        self.hidden + self.pos_embed_dim
    }
}

/// Detached recurrent state: `(h, c)` per layer, each `[batch, hidden]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LmState {
    pub layers: Vec<(Tensor, Tensor)>,
}

impl LmState {
    pub fn zeros(config: &LmConfig, batch: usize) -> Self {
        let z = Tensor::zeros(&[batch, config.hidden]);
        Self {
            layers: vec![(z.clone(), z); config.layers],
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmModel {
    pub config: LmConfig,
    params: ParamStore,
    embedding: ParamId,
    pos_embedding: Option<ParamId>,
    cells: Vec<RecurrentCell>,
    out_bias: ParamId,
}

struct Bound {
    embedding: NodeId,
    pos_embedding: Option<NodeId>,
    cells: Vec<BoundCell>,
    out_bias: NodeId,
}

/// Inverted dropout with a fresh Bernoulli mask.
fn dropout(g: &mut Graph, x: NodeId, p: f64, rng: &mut ChaCha8Rng) -> Result<NodeId, TensorError> {
    let shape = g.value(x).shape().to_vec();
    let keep = 1.0 - p;
    let n = shape.iter().product();
    let mask = (0..n).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
    let m = g.input(Tensor::new(shape, mask)?);
    g.mul(x, m)
}

impl LmModel {
    pub fn new(config: LmConfig) -> Result<Self, LmError> {
        if config.vocab_size < 2 || config.hidden == 0 || config.layers == 0 {
            return Err(LmError::Config(format!("{config:?}")));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(LmError::Config(format!("dropout {} outside [0, 1)", config.dropout)));
        }
        if config.has_pos() && config.pos_vocab_size == 0 {
            return Err(LmError::Config("POS channel needs a tag inventory".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut p = ParamStore::new();
        let embedding = p.add_xavier("embedding", config.vocab_size, config.hidden, &mut rng)?;
        let pos_embedding = if config.has_pos() {
            Some(p.add_xavier("pos_embedding", config.pos_vocab_size, config.pos_embed_dim, &mut rng)?)
        } else {
            None
        };
        let mut cells = Vec::with_capacity(config.layers);
        for k in 0..config.layers {
            let input = if k == 0 { config.input_width() } else { config.hidden };
            cells.push(RecurrentCell::new(&mut p, &format!("layer{k}"), config.cell, input, config.hidden, &mut rng)?);
        }
        let out_bias = p.add_zeros("output.bias", &[config.vocab_size])?;
        Ok(Self {
            config,
            params: p,
            embedding,
            pos_embedding,
            cells,
            out_bias,
        })
    }

    /// Rebuilds a model from checkpointed parameters, reading sizes, cell
    /// type and depth off the stored shapes.
    pub fn from_params(params: ParamStore) -> Result<Self, LmError> {
        let shape2 = |name: &str| -> Result<(usize, usize), LmError> {
            let id = params
                .id(name)
                .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
            match params.get(id).shape() {
                &[r, c] => Ok((r, c)),
                other => Err(LmError::Config(format!("`{name}` has shape {other:?}"))),
            }
        };
        let (v, h) = shape2("embedding")?;
        let (pv, pd) = if params.id("pos_embedding").is_some() {
            shape2("pos_embedding")?
        } else {
            (0, 0)
        };
        let layers = (0..).take_while(|k| params.id(&format!("layer{k}.w_ih")).is_some()).count();
        let cell = RecurrentCell::from_store(&params, "layer0")?.kind;
        let config = LmConfig {
            vocab_size: v,
            pos_vocab_size: pv,
            cell,
            layers,
            hidden: h,
            pos_embed_dim: pd,
            dropout: 0.0,
            seed: 0,
        };
        let mut model = Self::new(config)?;
        if model.params.len() != params.len() {
            return Err(LmError::Config(format!(
                "checkpoint has {} parameters, model expects {}",
                params.len(),
                model.params.len()
            )));
        }
        for id in model.params.ids().collect::<Vec<_>>() {
            let name = model.params.name(id).to_string();
            let src = params.require(&name, model.params.get(id).shape())?;
            *model.params.get_mut(id) = params.get(src).clone();
        }
        Ok(model)
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// The word embedding; also the output projection.
    pub fn embedding(&self) -> &Tensor {
        self.params.get(self.embedding)
    }

    /// The output projection matrix. Same parameter as [`Self::embedding`].
    pub fn output_projection(&self) -> &Tensor {
        self.params.get(self.embedding)
    }

    fn bind(&self, g: &mut Graph, store: &ParamStore) -> Bound {
        Bound {
            embedding: g.param(store, self.embedding),
            pos_embedding: self.pos_embedding.map(|p| g.param(store, p)),
            cells: self.cells.iter().map(|c| c.bind(g, store)).collect(),
            out_bias: g.param(store, self.out_bias),
        }
    }

    fn check_ids(&self, words: &[usize], pos: Option<&[usize]>) -> Result<(), LmError> {
        if let Some(&id) = words.iter().find(|&&w| w >= self.config.vocab_size) {
            return Err(LmError::IdOutOfRange { id, size: self.config.vocab_size });
        }
        match (pos, self.config.has_pos()) {
            (Some(_), false) => Err(LmError::UnexpectedPos),
            (None, true) => Err(LmError::MissingPos),
            (Some(p), true) => match p.iter().find(|&&t| t >= self.config.pos_vocab_size) {
                Some(&id) => Err(LmError::IdOutOfRange { id, size: self.config.pos_vocab_size }),
                None => Ok(()),
            },
            (None, false) => Ok(()),
        }
    }

    /// One time step for a batch; returns logits `[batch, vocab]`.
    fn step(
        &self,
        g: &mut Graph,
        b: &Bound,
        words: &[usize],
        pos: Option<&[usize]>,
        states: &mut [CellState],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<NodeId, LmError> {
        self.check_ids(words, pos)?;
        let p = self.config.dropout;
        let mut x = g.gather(b.embedding, words)?;
        if let (Some(pe), Some(tags)) = (b.pos_embedding, pos) {
            let t = g.gather(pe, tags)?;
            x = g.concat(&[x, t])?;
        }
        if let Some(r) = rng.as_deref_mut().filter(|_| p > 0.0) {
            x = dropout(g, x, p, r)?;
        }
        for (k, cell) in b.cells.iter().enumerate() {
            states[k] = cell.step(g, x, states[k])?;
            x = states[k].h;
            if k + 1 < b.cells.len() {
                if let Some(r) = rng.as_deref_mut().filter(|_| p > 0.0) {
                    x = dropout(g, x, p, r)?;
                }
            }
        }
        let logits = g.matmul_t(x, b.embedding)?;
        Ok(g.add_row(logits, b.out_bias)?)
    }

    fn input_state(&self, g: &mut Graph, state: &LmState) -> Vec<CellState> {
        state
            .layers
            .iter()
            .map(|(h, c)| CellState {
                h: g.input(h.clone()),
                c: g.input(c.clone()),
            })
            .collect()
    }

    fn detach(g: &Graph, states: &[CellState]) -> LmState {
        LmState {
            layers: states.iter().map(|s| (g.value(s.h).clone(), g.value(s.c).clone())).collect(),
        }
    }

    /// Mean NLL over a time-major chunk (`inputs[t][b]` predicts
    /// `targets[t][b]`), plus the final state. Passing an RNG turns dropout on.
    pub fn chunk_loss(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        inputs: &[Vec<usize>],
        pos: Option<&[Vec<usize>]>,
        targets: &[Vec<usize>],
        init: &LmState,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(NodeId, LmState), LmError> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(LmError::EmptyCorpus);
        }
        let b = self.bind(g, store);
        let mut states = self.input_state(g, init);
        let mut terms = Vec::with_capacity(inputs.len());
        for t in 0..inputs.len() {
            let tags = pos.map(|p| p[t].as_slice());
            let logits = self.step(g, &b, &inputs[t], tags, &mut states, rng.as_deref_mut())?;
            let ls = g.log_softmax(logits)?;
            terms.push(g.pick(ls, &targets[t])?);
        }
        let all = g.concat(&terms)?;
        let mean = g.mean(all)?;
        let loss = g.scale(mean, -1.0)?;
        Ok((loss, Self::detach(g, &states)))
    }

    /// Next-word distribution for a single stream.
    pub fn next_word_distribution(&self, state: &LmState, word: usize, pos: Option<usize>) -> Result<(Vec<f64>, LmState), LmError> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, &self.params);
        let mut states = self.input_state(&mut g, state);
        let tags = pos.map(|p| [p]);
        let logits = self.step(&mut g, &b, &[word], tags.as_ref().map(|t| &t[..]), &mut states, None)?;
        let probs = g.softmax(logits)?;
        Ok((g.value(probs).data().to_vec(), Self::detach(&g, &states)))
    }

    /// Summed NLL of one utterance, reset state, EOS first as input and
    /// last as target. Returns `(nll, predicted tokens)`.
    pub fn utterance_nll(&self, words: &[usize], pos: Option<&[usize]>, eos: usize, eos_pos: usize) -> Result<(f64, usize), LmError> {
        let mut inputs = vec![vec![eos]];
        inputs.extend(words.iter().map(|&w| vec![w]));
        let mut targets: Vec<Vec<usize>> = words.iter().map(|&w| vec![w]).collect();
        targets.push(vec![eos]);
        let tags: Option<Vec<Vec<usize>>> = pos.map(|p| std::iter::once(eos_pos).chain(p.iter().copied()).map(|t| vec![t]).collect());
        let mut g = Graph::new();
        let init = LmState::zeros(&self.config, 1);
        let (loss, _) = self.chunk_loss(&mut g, &self.params, &inputs, tags.as_deref(), &targets, &init, None)?;
        let n = targets.len();
        Ok((g.value(loss).data()[0] * n as f64, n))
    }
}
