use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EncodedExample, BOS, UNK};
use crate::nn::{BoundCell, BoundLinear, CellKind, CellState, Linear, RecurrentCell};
use crate::tensor::{Graph, NodeId, ParamId, ParamStore, Tensor, TensorError};

use super::beam::StepModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderMode {
    AttentionOnly,
    PointerGenerator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub mode: DecoderMode,
    pub beam_size: usize,
    /// Fixed decode limit; `None` means 1.5 × source length.
    pub max_decode_len: Option<usize>,
    pub seed: u64,
}

impl Seq2SeqConfig {
    pub fn new(vocab_size: usize, mode: DecoderMode) -> Self {
        Self {
            vocab_size,
            embed_dim: 500,
            hidden_dim: 500,
            mode,
            beam_size: 5,
            max_decode_len: None,
            seed: 0,
        }
    }

    pub fn with_dims(mut self, embed_dim: usize, hidden_dim: usize) -> Self {
        self.embed_dim = embed_dim;
        self.hidden_dim = hidden_dim;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn decode_limit(&self, src_len: usize) -> usize {
        self.max_decode_len
            .unwrap_or_else(|| (src_len * 3).div_ceil(2))
            .max(1)
    }
}

/// Everything a decoder step produces, copied out of the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDistribution {
    pub attention: Vec<f64>,
    pub p_vocab: Vec<f64>,
    /// `None` in attention-only mode.
    pub p_gen: Option<f64>,
    /// Over `vocab_size + #source OOVs` in pointer-generator mode, over the
    /// vocabulary otherwise.
    pub p_final: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Gate {
    w_context: ParamId,
    w_state: ParamId,
    w_input: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct Seq2Seq {
    pub config: Seq2SeqConfig,
    params: ParamStore,
    embedding: ParamId,
    enc_fwd: RecurrentCell,
    enc_bwd: RecurrentCell,
    enc_proj: Linear,
    init_h: Linear,
    init_c: Linear,
    dec: RecurrentCell,
    attn: ParamId,
    out_hidden: Linear,
    out_vocab: Linear,
    gate: Option<Gate>,
    /// Pins `p_gen` to a constant (test hook: 0 = copy only, 1 = generate only).
    pub force_gate: Option<f64>,
}

/// Graph-side handles for one forward pass.
#[derive(Clone, Copy, Debug)]
struct Bound {
    embedding: NodeId,
    enc_fwd: BoundCell,
    enc_bwd: BoundCell,
    enc_proj: BoundLinear,
    init_h: BoundLinear,
    init_c: BoundLinear,
    dec: BoundCell,
    attn: NodeId,
    out_hidden: BoundLinear,
    out_vocab: BoundLinear,
    gate: Option<[NodeId; 4]>,
}

/// Encoder states and the initial decoder state, as plain tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    /// `[source_len, hidden]`.
    pub states: Tensor,
    pub init_h: Tensor,
    pub init_c: Tensor,
}

#[derive(Clone, Copy, Debug)]
struct Encoded {
    states: NodeId,
    init: CellState,
}

#[derive(Clone, Copy, Debug)]
struct StepNodes {
    state: CellState,
    attention: NodeId,
    logits: NodeId,
    p_vocab: NodeId,
    p_gen: Option<NodeId>,
    /// Pointer-generator mixture; `None` in attention-only mode.
    p_final: Option<NodeId>,
}

/// General (bilinear) attention: `score_i = sᵀ W_a h_i`.
/// Returns the attention weights `[n]` and the context vector `[hidden]`.
pub fn attend(
    g: &mut Graph,
    w_a: NodeId,
    state: NodeId,
    enc_states: NodeId,
) -> Result<(NodeId, NodeId), TensorError> {
    let query = g.matmul(state, w_a)?;
    let scores = g.matmul_t(query, enc_states)?;
    let weights = g.softmax(scores)?;
    let context = g.matmul(weights, enc_states)?;
    Ok((weights, context))
}

/// `p_gen = σ(w_h*ᵀ h*_t + w_sᵀ s_t + w_xᵀ x_t + b_ptr)`; the weights are
/// `[1, dim]` row matrices and the bias is `[1]`.
pub fn generation_gate(
    g: &mut Graph,
    weights: [NodeId; 4],
    context: NodeId,
    state: NodeId,
    input: NodeId,
) -> Result<NodeId, TensorError> {
    let [w_context, w_state, w_input, bias] = weights;
    let a = g.matmul_t(context, w_context)?;
    let b = g.matmul_t(state, w_state)?;
    let c = g.matmul_t(input, w_input)?;
    let z = g.add_all(&[a, b, c, bias])?;
    g.sigmoid(z)
}

/// Mixture over the extended vocabulary, computed directly:
/// `P(w) = p_gen · P_vocab(w) + (1 − p_gen) · Σ_{i: src_i = w} a_i`.
pub fn final_distribution(p_vocab: &[f64], attention: &[f64], p_gen: f64, src_extended_ids: &[usize]) -> Vec<f64> {
    let ext = src_extended_ids
        .iter()
        .map(|&i| i + 1)
        .max()
        .unwrap_or(0)
        .max(p_vocab.len());
    let mut out = vec![0.0; ext];
    for (o, p) in out.iter_mut().zip(p_vocab) {
        *o = p_gen * p;
    }
    for (&i, a) in src_extended_ids.iter().zip(attention) {
        out[i] += (1.0 - p_gen) * a;
    }
    out
}

fn rows_of(store: &ParamStore, name: &str) -> Result<(usize, usize), TensorError> {
    let id = store
        .id(name)
        .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
    match store.get(id).shape() {
        &[r, c] => Ok((r, c)),
        other => Err(TensorError::InvalidArgument(format!("`{name}` has shape {other:?}"))),
    }
}

impl Seq2Seq {
    pub fn new(config: Seq2SeqConfig) -> Result<Self, TensorError> {
        if config.beam_size == 0 || config.vocab_size < 5 || config.embed_dim == 0 || config.hidden_dim == 0 {
            return Err(TensorError::InvalidArgument(format!("invalid seq2seq config {config:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (v, e, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
        let mut p = ParamStore::new();
        let embedding = p.add_xavier("embedding", v, e, &mut rng)?;
        let enc_fwd = RecurrentCell::new(&mut p, "encoder.fwd", CellKind::Lstm, e, h, &mut rng)?;
        let enc_bwd = RecurrentCell::new(&mut p, "encoder.bwd", CellKind::Lstm, e, h, &mut rng)?;
        let enc_proj = Linear::new(&mut p, "encoder.proj", 2 * h, h, true, &mut rng)?;
        let init_h = Linear::new(&mut p, "bridge.h", 2 * h, h, true, &mut rng)?;
        let init_c = Linear::new(&mut p, "bridge.c", 2 * h, h, true, &mut rng)?;
        let dec = RecurrentCell::new(&mut p, "decoder", CellKind::Lstm, e, h, &mut rng)?;
        let attn = p.add_xavier("attention.w", h, h, &mut rng)?;
        let out_hidden = Linear::new(&mut p, "output.hidden", 2 * h, h, true, &mut rng)?;
        let out_vocab = Linear::new(&mut p, "output.vocab", h, v, true, &mut rng)?;
        let gate = match config.mode {
            DecoderMode::AttentionOnly => None,
            DecoderMode::PointerGenerator => Some(Gate {
                w_context: p.add_xavier("gate.w_context", 1, h, &mut rng)?,
                w_state: p.add_xavier("gate.w_state", 1, h, &mut rng)?,
                w_input: p.add_xavier("gate.w_input", 1, e, &mut rng)?,
                bias: p.add_zeros("gate.bias", &[1])?,
            }),
        };
        Ok(Self {
            config,
            params: p,
            embedding,
            enc_fwd,
            enc_bwd,
            enc_proj,
            init_h,
            init_c,
            dec,
            attn,
            out_hidden,
            out_vocab,
            gate,
            force_gate: None,
        })
    }

    /// Rebuilds a model from checkpointed parameters; sizes and mode are
    /// read off the parameter shapes.
    pub fn from_params(params: ParamStore) -> Result<Self, TensorError> {
        let (v, e) = rows_of(&params, "embedding")?;
        let (_, h) = rows_of(&params, "encoder.fwd.w_hh")?;
        let mode = if params.id("gate.bias").is_some() {
            DecoderMode::PointerGenerator
        } else {
            DecoderMode::AttentionOnly
        };
        let config = Seq2SeqConfig::new(v, mode).with_dims(e, h);
        let mut model = Self::new(config)?;
        let fresh: Vec<(String, Vec<usize>)> = model
            .params
            .iter()
            .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
            .collect();
        if fresh.len() != params.len() {
            return Err(TensorError::InvalidArgument(format!(
                "checkpoint has {} parameters, model expects {}",
                params.len(),
                fresh.len()
            )));
        }
        for (name, shape) in fresh {
            let src = params.require(&name, &shape)?;
            let dst = model.params.id(&name).expect("fresh model parameter");
            *model.params.get_mut(dst) = params.get(src).clone();
        }
        Ok(model)
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn bind(&self, g: &mut Graph, store: &ParamStore) -> Bound {
        Bound {
            embedding: g.param(store, self.embedding),
            enc_fwd: self.enc_fwd.bind(g, store),
            enc_bwd: self.enc_bwd.bind(g, store),
            enc_proj: self.enc_proj.bind(g, store),
            init_h: self.init_h.bind(g, store),
            init_c: self.init_c.bind(g, store),
            dec: self.dec.bind(g, store),
            attn: g.param(store, self.attn),
            out_hidden: self.out_hidden.bind(g, store),
            out_vocab: self.out_vocab.bind(g, store),
            gate: self.gate.as_ref().map(|gt| {
                [
                    g.param(store, gt.w_context),
                    g.param(store, gt.w_state),
                    g.param(store, gt.w_input),
                    g.param(store, gt.bias),
                ]
            }),
        }
    }

    fn zero_state(&self, g: &mut Graph) -> CellState {
        let z = Tensor::zeros(&[self.config.hidden_dim]);
        CellState {
            h: g.input(z.clone()),
            c: g.input(z),
        }
    }

    fn encode_nodes(&self, g: &mut Graph, b: &Bound, src_ids: &[usize]) -> Result<Encoded, TensorError> {
        if src_ids.is_empty() {
            return Err(TensorError::InvalidArgument("empty source sequence".into()));
        }
        let v = self.config.vocab_size;
        let xs = src_ids
            .iter()
            .map(|&id| g.row(b.embedding, if id < v { id } else { UNK }))
            .collect::<Result<Vec<_>, _>>()?;

        let mut fwd = Vec::with_capacity(xs.len());
        let mut s = self.zero_state(g);
        for &x in &xs {
            s = b.enc_fwd.step(g, x, s)?;
            fwd.push(s);
        }
        let mut bwd = vec![s; xs.len()];
        let mut s = self.zero_state(g);
        for (i, &x) in xs.iter().enumerate().rev() {
            s = b.enc_bwd.step(g, x, s)?;
            bwd[i] = s;
        }

        let mut rows = Vec::with_capacity(xs.len());
        for (f, bk) in fwd.iter().zip(&bwd) {
            let both = g.concat(&[f.h, bk.h])?;
            rows.push(b.enc_proj.forward(g, both)?);
        }
        let states = g.stack(&rows)?;

        let last_f = fwd[fwd.len() - 1];
        let first_b = bwd[0];
        let hs = g.concat(&[last_f.h, first_b.h])?;
        let cs = g.concat(&[last_f.c, first_b.c])?;
        let init = CellState {
            h: b.init_h.forward(g, hs)?,
            c: b.init_c.forward(g, cs)?,
        };
        Ok(Encoded { states, init })
    }

    fn step_nodes(
        &self,
        g: &mut Graph,
        b: &Bound,
        enc: &Encoded,
        state: CellState,
        input_id: usize,
        src_extended_ids: &[usize],
        extended_size: usize,
    ) -> Result<StepNodes, TensorError> {
        let v = self.config.vocab_size;
        let x = g.row(b.embedding, if input_id < v { input_id } else { UNK })?;
        let state = b.dec.step(g, x, state)?;
        let (attention, context) = attend(g, b.attn, state.h, enc.states)?;
        let joined = g.concat(&[state.h, context])?;
        let hidden = b.out_hidden.forward(g, joined)?;
        let hidden = g.tanh(hidden)?;
        let logits = b.out_vocab.forward(g, hidden)?;
        let p_vocab = g.softmax(logits)?;

        let (p_gen, p_final) = match b.gate {
            None => (None, None),
            Some(weights) => {
                let p_gen = match self.force_gate {
                    Some(v) => g.input(Tensor::scalar(v)),
                    None => generation_gate(g, weights, context, state.h, x)?,
                };
                let padded = g.pad(p_vocab, extended_size)?;
                let generated = g.mul_scalar(padded, p_gen)?;
                let copy_weight = g.affine(p_gen, -1.0, 1.0)?;
                let copied = g.scatter(attention, src_extended_ids, extended_size)?;
                let copied = g.mul_scalar(copied, copy_weight)?;
                (Some(p_gen), Some(g.add(generated, copied)?))
            }
        };
        Ok(StepNodes {
            state,
            attention,
            logits,
            p_vocab,
            p_gen,
            p_final,
        })
    }

    /// Encoder states and initial decoder state for `src_ids`.
    pub fn encode(&self, src_ids: &[usize]) -> Result<EncoderOutput, TensorError> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, &self.params);
        let enc = self.encode_nodes(&mut g, &b, src_ids)?;
        Ok(EncoderOutput {
            states: g.value(enc.states).clone(),
            init_h: g.value(enc.init.h).clone(),
            init_c: g.value(enc.init.c).clone(),
        })
    }

    /// Summed teacher-forced NLL of the reference and the number of
    /// predicted tokens, recorded on `g` with parameters from `store`.
    pub fn loss(&self, g: &mut Graph, store: &ParamStore, ex: &EncodedExample) -> Result<(NodeId, usize), TensorError> {
        let (tgt, tgt_ext) = match (&ex.tgt_ids, &ex.tgt_extended_ids) {
            (Some(t), Some(e)) if t.len() >= 2 => (t, e),
            _ => return Err(TensorError::InvalidArgument("example has no target".into())),
        };
        let b = self.bind(g, store);
        let enc = self.encode_nodes(g, &b, &ex.src_ids)?;
        let ext_size = ex.extended_vocab_size();
        let mut state = enc.init;
        let mut terms = Vec::with_capacity(tgt.len() - 1);
        for t in 1..tgt.len() {
            let step = self.step_nodes(g, &b, &enc, state, tgt_ext[t - 1], &ex.src_extended_ids, ext_size)?;
            state = step.state;
            let log_p = match step.p_final {
                Some(p_final) => {
                    let picked = g.pick(p_final, &[tgt_ext[t]])?;
                    g.log(picked)?
                }
                None => {
                    let ls = g.log_softmax(step.logits)?;
                    g.pick(ls, &[tgt[t]])?
                }
            };
            terms.push(log_p);
        }
        let stacked = g.concat(&terms)?;
        let total = g.sum(stacked)?;
        Ok((g.scale(total, -1.0)?, terms.len()))
    }

    /// Teacher-forced per-step distributions for the reference target.
    pub fn step_distributions(&self, ex: &EncodedExample) -> Result<Vec<StepDistribution>, TensorError> {
        let tgt_ext = ex
            .tgt_extended_ids
            .as_ref()
            .ok_or_else(|| TensorError::InvalidArgument("example has no target".into()))?;
        let mut g = Graph::new();
        let b = self.bind(&mut g, &self.params);
        let enc = self.encode_nodes(&mut g, &b, &ex.src_ids)?;
        let mut state = enc.init;
        let mut out = Vec::new();
        for &input in &tgt_ext[..tgt_ext.len() - 1] {
            let step = self.step_nodes(&mut g, &b, &enc, state, input, &ex.src_extended_ids, ex.extended_vocab_size())?;
            state = step.state;
            out.push(self.snapshot(&g, &step));
        }
        Ok(out)
    }

    fn snapshot(&self, g: &Graph, step: &StepNodes) -> StepDistribution {
        let p_vocab = g.value(step.p_vocab).data().to_vec();
        StepDistribution {
            attention: g.value(step.attention).data().to_vec(),
            p_gen: step.p_gen.map(|n| g.value(n).data()[0]),
            p_final: step
                .p_final
                .map_or_else(|| p_vocab.clone(), |n| g.value(n).data().to_vec()),
            p_vocab,
        }
    }

    /// Incremental decoder over one encoded source, for search.
    pub fn decoder<'a>(&'a self, ex: &'a EncodedExample) -> Result<Seq2SeqDecoder<'a>, TensorError> {
        let mut graph = Graph::new();
        let bound = self.bind(&mut graph, &self.params);
        let enc = self.encode_nodes(&mut graph, &bound, &ex.src_ids)?;
        Ok(Seq2SeqDecoder {
            model: self,
            example: ex,
            graph,
            bound,
            enc,
            banned: Vec::new(),
        })
    }
}

/// Holds the inference graph for one source; [`StepModel`] states are
/// node handles into it.
pub struct Seq2SeqDecoder<'a> {
    model: &'a Seq2Seq,
    example: &'a EncodedExample,
    graph: Graph,
    bound: Bound,
    enc: Encoded,
    banned: Vec<usize>,
}

impl Seq2SeqDecoder<'_> {
    /// Ids that search must never emit (e.g. PAD, BOS, the separator).
    /// Only [`StepModel::step`] applies the ban.
    pub fn with_banned(mut self, ids: &[usize]) -> Self {
        self.banned = ids.to_vec();
        self
    }

    /// Output space size: extended vocabulary in pointer-generator mode.
    pub fn output_size(&self) -> usize {
        match self.model.config.mode {
            DecoderMode::PointerGenerator => self.example.extended_vocab_size(),
            DecoderMode::AttentionOnly => self.model.config.vocab_size,
        }
    }

    pub fn step_distribution(&mut self, state: &CellState, prev: usize) -> Result<(StepDistribution, CellState), TensorError> {
        let step = self.model.step_nodes(
            &mut self.graph,
            &self.bound,
            &self.enc,
            *state,
            prev,
            &self.example.src_extended_ids,
            self.example.extended_vocab_size(),
        )?;
        Ok((self.model.snapshot(&self.graph, &step), step.state))
    }
}

impl StepModel for Seq2SeqDecoder<'_> {
    type State = CellState;

    fn start(&mut self) -> Result<CellState, TensorError> {
        Ok(self.enc.init)
    }

    fn bos(&self) -> usize {
        BOS
    }

    fn eos(&self) -> usize {
        crate::corpus::EOS
    }

    fn step(&mut self, state: &CellState, prev: usize) -> Result<(Vec<f64>, CellState), TensorError> {
        let (dist, next) = self.step_distribution(state, prev)?;
        let mut lp: Vec<f64> = dist.p_final.iter().map(|p| p.ln()).collect();
        for &b in &self.banned {
            if let Some(x) = lp.get_mut(b) {
                *x = f64::NEG_INFINITY;
            }
        }
        Ok((lp, next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{encode_example, ParallelExample, Vocabulary, SEP_TOKEN};

    fn tiny(mode: DecoderMode, seed: u64) -> (Seq2Seq, Vocabulary) {
        let words: Vec<String> = ["a", "b", "c", "d", "e", "f", "x"].iter().map(|s| s.to_string()).collect();
        let vocab = Vocabulary::build_with_reserved([words], 12, &[SEP_TOKEN]);
        let cfg = Seq2SeqConfig::new(vocab.len(), mode).with_dims(8, 8).with_seed(seed);
        (Seq2Seq::new(cfg).unwrap(), vocab)
    }

    #[test]
    fn encoder_shapes_and_determinism() {
        let (m, v) = tiny(DecoderMode::PointerGenerator, 3);
        let ids = v.encode(&["a".into(), "b".into(), "c".into()]);
        let out = m.encode(&ids).unwrap();
        assert_eq!(out.states.shape(), &[3, 8]);
        assert_eq!(out.init_h.shape(), &[8]);
        assert_eq!(m.encode(&ids).unwrap(), out);
        assert!(m.encode(&[]).is_err());
    }

    #[test]
    fn reversed_input_changes_states() {
        let (m, v) = tiny(DecoderMode::PointerGenerator, 3);
        let ids = v.encode(&["a".into(), "b".into(), "c".into()]);
        let rev: Vec<usize> = ids.iter().rev().copied().collect();
        let fwd = m.encode(&ids).unwrap().states;
        let back = m.encode(&rev).unwrap().states;
        // Position 1 sees the same token in both orders; its state still differs.
        let diff: f64 = fwd.row(1).iter().zip(back.row(1)).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 1e-6, "diff {diff}");
    }

    #[test]
    fn attention_singleton_and_uniform() {
        let mut g = Graph::new();
        let s = g.input(Tensor::vector(vec![0.3, -0.2]));
        let w = g.input(Tensor::matrix(2, 2, vec![1.0, 2.0, -1.0, 0.5]).unwrap());
        let one = g.input(Tensor::matrix(1, 2, vec![0.7, 0.1]).unwrap());
        let (a, ctx) = attend(&mut g, w, s, one).unwrap();
        assert_eq!(g.value(a).data(), &[1.0]);
        assert_eq!(g.value(ctx).data(), &[0.7, 0.1]);

        let zero = g.input(Tensor::zeros(&[2, 2]));
        let three = g.input(Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 5.0, 5.0]).unwrap());
        let (a, _) = attend(&mut g, zero, s, three).unwrap();
        for p in g.value(a).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_hand_example() {
        // s = [1, 2], W = [[1, 0], [0, 2]], h1 = [1, 0], h2 = [0, 1]
        // sᵀW = [1, 4]; scores = [1, 4]; a = softmax([1, 4]).
        let mut g = Graph::new();
        let s = g.input(Tensor::vector(vec![1.0, 2.0]));
        let w = g.input(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap());
        let h = g.input(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let (a, ctx) = attend(&mut g, w, s, h).unwrap();
        let e3 = 3f64.exp();
        let expected = [1.0 / (1.0 + e3), e3 / (1.0 + e3)];
        for (x, y) in g.value(a).data().iter().zip(expected) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in g.value(ctx).data().iter().zip(expected) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn gate_nodes(g: &mut Graph, wc: &[f64], ws: &[f64], wx: &[f64], b: f64) -> [NodeId; 4] {
        [
            g.input(Tensor::matrix(1, wc.len(), wc.to_vec()).unwrap()),
            g.input(Tensor::matrix(1, ws.len(), ws.to_vec()).unwrap()),
            g.input(Tensor::matrix(1, wx.len(), wx.to_vec()).unwrap()),
            g.input(Tensor::scalar(b)),
        ]
    }

    #[test]
    fn gate_limits_and_hand_value() {
        let mut g = Graph::new();
        let c = g.input(Tensor::vector(vec![0.5, -1.0]));
        let s = g.input(Tensor::vector(vec![2.0, 0.25]));
        let x = g.input(Tensor::vector(vec![-0.5, 1.5, 1.0]));

        let w = gate_nodes(&mut g, &[0.0; 2], &[0.0; 2], &[0.0; 3], 0.0);
        let p = generation_gate(&mut g, w, c, s, x).unwrap();
        assert_eq!(g.value(p).data(), &[0.5]);

        let w = gate_nodes(&mut g, &[0.0; 2], &[0.0; 2], &[0.0; 3], 20.0);
        let p = generation_gate(&mut g, w, c, s, x).unwrap();
        assert!(g.value(p).data()[0] >= 1.0 - 1e-8);

        // z = (0.1·0.5 − 0.2·−1) + (0.3·2 + 0.4·0.25) + (1·−0.5 − 1·1.5 + 0.5·1) − 0.1
        //   = 0.25 + 0.7 − 1.5 − 0.1 = −0.65
        let w = gate_nodes(&mut g, &[0.1, -0.2], &[0.3, 0.4], &[1.0, -1.0, 0.5], -0.1);
        let p = generation_gate(&mut g, w, c, s, x).unwrap();
        let expected = 1.0 / (1.0 + 0.65f64.exp());
        assert!((g.value(p).data()[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn mixture_hand_example() {
        // vocab {a: 0, b: 1}, source [a, c(OOV -> 2)]
        let p = final_distribution(&[0.5, 0.5], &[0.25, 0.75], 0.6, &[0, 2]);
        let expected = [0.40, 0.30, 0.30];
        for (x, y) in p.iter().zip(expected) {
            assert!((x - y).abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn mixture_limits() {
        let p = final_distribution(&[0.2, 0.8], &[0.5, 0.5], 0.999_999, &[1, 2]);
        assert!((p[0] - 0.2).abs() < 1e-6 && (p[1] - 0.8).abs() < 1e-6 && p[2] < 1e-6);
        let p = final_distribution(&[0.2, 0.8, 0.0], &[0.5, 0.5], 1e-9, &[2, 2]);
        assert!((p[2] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn graph_mixture_matches_direct_formula() {
        let (m, v) = tiny(DecoderMode::PointerGenerator, 5);
        let ex = ParallelExample::from_text("a zz b", "c zz qq", Some("a qq c"));
        let enc = encode_example(&ex, &v);
        for step in m.step_distributions(&enc).unwrap() {
            let direct = final_distribution(&step.p_vocab, &step.attention, step.p_gen.unwrap(), &enc.src_extended_ids);
            assert_eq!(direct.len(), step.p_final.len());
            for (a, b) in direct.iter().zip(&step.p_final) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn checkpoint_params_rebuild_model() {
        let (m, _) = tiny(DecoderMode::PointerGenerator, 9);
        let back = Seq2Seq::from_params(m.params().clone()).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.config.mode, DecoderMode::PointerGenerator);
        let (a, _) = tiny(DecoderMode::AttentionOnly, 9);
        assert_eq!(Seq2Seq::from_params(a.params().clone()).unwrap().config.mode, DecoderMode::AttentionOnly);
    }

    #[test]
    fn default_dims_follow_training_setup() {
        let c = Seq2SeqConfig::new(100, DecoderMode::PointerGenerator);
        assert_eq!((c.embed_dim, c.hidden_dim, c.beam_size), (500, 500, 5));
        assert_eq!(c.decode_limit(7), 11);
    }
}
