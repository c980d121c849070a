//! Recurrent cells and affine layers built on the autodiff graph.
//!
//! Each layer owns only [`ParamId`]s. `bind` copies the weights into a graph
//! once; the bound form is then stepped as many times as needed.

use rand::Rng;

use crate::tensor::{Graph, NodeId, ParamId, ParamStore, TensorError};

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    weight: NodeId,
    bias: Option<NodeId>,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let weight = store.add_xavier(format!("{name}.weight"), output, input, rng)?;
        let bias = if bias {
            Some(store.add_zeros(format!("{name}.bias"), &[output])?)
        } else {
            None
        };
        Ok(Self { weight, bias })
    }

    pub fn from_store(store: &ParamStore, name: &str, input: usize, output: usize, bias: bool) -> Result<Self, TensorError> {
        let weight = store.require(&format!("{name}.weight"), &[output, input])?;
        let bias = if bias {
            Some(store.require(&format!("{name}.bias"), &[output])?)
        } else {
            None
        };
        Ok(Self { weight, bias })
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> BoundLinear {
        BoundLinear {
            weight: g.param(store, self.weight),
            bias: self.bias.map(|b| g.param(store, b)),
        }
    }
}

impl BoundLinear {
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId, TensorError> {
        let y = g.matmul_t(x, self.weight)?;
        match self.bias {
            Some(b) => g.add_row(y, b),
            None => Ok(y),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Lstm,
    SimpleRnn,
}

impl CellKind {
    fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::SimpleRnn => 1,
        }
    }
}

/// LSTM (gates ordered input, forget, candidate, output) or Elman RNN.
#[derive(Clone, Debug)]
pub struct RecurrentCell {
    pub kind: CellKind,
    pub input: usize,
    pub hidden: usize,
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundCell {
    kind: CellKind,
    hidden: usize,
    w_ih: NodeId,
    w_hh: NodeId,
    bias: NodeId,
}

/// Hidden state; `c` is unused by the simple RNN.
#[derive(Clone, Copy, Debug)]
pub struct CellState {
    pub h: NodeId,
    pub c: NodeId,
}

impl RecurrentCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        kind: CellKind,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let rows = kind.gates() * hidden;
        Ok(Self {
            kind,
            input,
            hidden,
            w_ih: store.add_xavier(format!("{name}.w_ih"), rows, input, rng)?,
            w_hh: store.add_xavier(format!("{name}.w_hh"), rows, hidden, rng)?,
            bias: store.add_zeros(format!("{name}.bias"), &[rows])?,
        })
    }

    /// Recovers a cell from stored parameters, inferring kind and sizes
    /// from the weight shapes.
    pub fn from_store(store: &ParamStore, name: &str) -> Result<Self, TensorError> {
        let w_ih = store
            .id(&format!("{name}.w_ih"))
            .ok_or_else(|| TensorError::UnknownParam(format!("{name}.w_ih")))?;
        let (rows, input) = match store.get(w_ih).shape() {
            &[r, c] => (r, c),
            other => {
                return Err(TensorError::InvalidArgument(format!(
                    "{name}.w_ih has shape {other:?}"
                )))
            }
        };
        let w_hh_id = store
            .id(&format!("{name}.w_hh"))
            .ok_or_else(|| TensorError::UnknownParam(format!("{name}.w_hh")))?;
        let hidden = store.get(w_hh_id).cols();
        let kind = if rows == 4 * hidden {
            CellKind::Lstm
        } else if rows == hidden {
            CellKind::SimpleRnn
        } else {
            return Err(TensorError::InvalidArgument(format!(
                "{name}: {rows} gate rows for hidden size {hidden}"
            )));
        };
        Ok(Self {
            kind,
            input,
            hidden,
            w_ih,
            w_hh: store.require(&format!("{name}.w_hh"), &[rows, hidden])?,
            bias: store.require(&format!("{name}.bias"), &[rows])?,
        })
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> BoundCell {
        BoundCell {
            kind: self.kind,
            hidden: self.hidden,
            w_ih: g.param(store, self.w_ih),
            w_hh: g.param(store, self.w_hh),
            bias: g.param(store, self.bias),
        }
    }
}

impl BoundCell {
    pub fn step(&self, g: &mut Graph, x: NodeId, state: CellState) -> Result<CellState, TensorError> {
        let xi = g.matmul_t(x, self.w_ih)?;
        let hh = g.matmul_t(state.h, self.w_hh)?;
        let pre = g.add(xi, hh)?;
        let pre = g.add_row(pre, self.bias)?;
        match self.kind {
            CellKind::SimpleRnn => {
                let h = g.tanh(pre)?;
                Ok(CellState { h, c: state.c })
            }
            CellKind::Lstm => {
                let n = self.hidden;
                let i = g.slice(pre, 0, n)?;
                let f = g.slice(pre, n, n)?;
                let cand = g.slice(pre, 2 * n, n)?;
                let o = g.slice(pre, 3 * n, n)?;
                let i = g.sigmoid(i)?;
                let f = g.sigmoid(f)?;
                let cand = g.tanh(cand)?;
                let o = g.sigmoid(o)?;
                let keep = g.mul(f, state.c)?;
                let write = g.mul(i, cand)?;
                let c = g.add(keep, write)?;
                let tc = g.tanh(c)?;
                let h = g.mul(o, tc)?;
                Ok(CellState { h, c })
            }
        }
    }
}
