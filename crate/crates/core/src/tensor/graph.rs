use super::params::{Gradients, ParamId, ParamStore};
use super::{Tensor, TensorError};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    MatMulT(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Affine(NodeId, f64),
    MulScalar(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize),
    Gather(NodeId, Vec<usize>),
    Stack(Vec<NodeId>),
    Pick(NodeId, Vec<usize>),
    Sum(NodeId),
    Mean(NodeId),
    Scatter(NodeId, Vec<usize>),
    Pad(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::MatMulT(..) => "matmul_t",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Affine(..) => "affine",
            Op::MulScalar(..) => "mul_scalar",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Softmax(_) => "softmax",
            Op::LogSoftmax(_) => "log_softmax",
            Op::Concat(_) => "concat",
            Op::Slice(..) => "slice",
            Op::Gather(..) => "gather",
            Op::Stack(_) => "stack",
            Op::Pick(..) => "pick",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Scatter(..) => "scatter",
            Op::Pad(_) => "pad",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Tape of eagerly evaluated operations.
///
/// Nodes are appended in evaluation order, so the node list is always a
/// topological order and [`Graph::backward`] is a single reverse sweep.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_str(shape: &[usize]) -> String {
    format!("{shape:?}")
}

fn with_last(shape: &[usize], last: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    *s.last_mut().expect("non-empty shape") = last;
    s
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(src: &Tensor) -> Tensor {
    let cols = src.cols();
    let mut out = src.clone();
    for row in out.data.chunks_mut(cols) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn log_softmax_rows(src: &Tensor) -> Tensor {
    let cols = src.cols();
    let mut out = src.clone();
    for row in out.data.chunks_mut(cols) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn node(&self, id: NodeId) -> Result<&Tensor, TensorError> {
        self.nodes
            .get(id.0)
            .map(|n| &n.value)
            .ok_or(TensorError::UnknownNode(id.0))
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn mismatch(&self, op: &'static str, expected: String, actual: String) -> TensorError {
        TensorError::ShapeMismatch {
            node: self.nodes.len(),
            op,
            expected,
            actual,
        }
    }

    /// Feeds a constant tensor into the graph.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value)
    }

    /// Copies a parameter into the graph as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(Op::Param(id), store.get(id).clone())
    }

    /// `a [.., k] × b [k, n] -> [.., n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (av, bv) = (self.node(a)?, self.node(b)?);
        let k = av.cols();
        if bv.shape.len() != 2 || bv.shape[0] != k {
            return Err(self.mismatch(
                "matmul",
                format!("[{k}, n]"),
                shape_str(&bv.shape),
            ));
        }
        let n = bv.shape[1];
        let m = av.rows();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &av.data[i * k..(i + 1) * k];
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &aik) in arow.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(&bv.data[p * n..(p + 1) * n]) {
                    *o += aik * b;
                }
            }
        }
        let value = Tensor {
            shape: with_last(&av.shape, n),
            data: out,
        };
        Ok(self.push(Op::MatMul(a, b), value))
    }

    /// `a [.., k] × bᵀ` for `b [n, k]`, giving `[.., n]`.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (av, bv) = (self.node(a)?, self.node(b)?);
        let k = av.cols();
        if bv.shape.len() != 2 || bv.shape[1] != k {
            return Err(self.mismatch(
                "matmul_t",
                format!("[n, {k}]"),
                shape_str(&bv.shape),
            ));
        }
        let n = bv.shape[0];
        let m = av.rows();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let arow = &av.data[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &bv.data[j * k..(j + 1) * k];
                out.push(arow.iter().zip(brow).map(|(x, y)| x * y).sum());
            }
        }
        let value = Tensor {
            shape: with_last(&av.shape, n),
            data: out,
        };
        Ok(self.push(Op::MatMulT(a, b), value))
    }

    fn zip_same(
        &mut self,
        a: NodeId,
        b: NodeId,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId, TensorError> {
        let (av, bv) = (self.node(a)?, self.node(b)?);
        if av.shape != bv.shape {
            return Err(self.mismatch(op.name(), shape_str(&av.shape), shape_str(&bv.shape)));
        }
        let data = av.data.iter().zip(&bv.data).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor {
            shape: av.shape.clone(),
            data,
        };
        Ok(self.push(op, value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.zip_same(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.zip_same(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.zip_same(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Sum of several same-shaped nodes.
    pub fn add_all(&mut self, terms: &[NodeId]) -> Result<NodeId, TensorError> {
        let (&first, rest) = terms
            .split_first()
            .ok_or_else(|| TensorError::InvalidArgument("add_all of nothing".into()))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    /// Adds the vector `b [n]` to every row of `a [.., n]`.
    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (av, bv) = (self.node(a)?, self.node(b)?);
        let n = av.cols();
        if bv.len() != n || bv.shape.len() != 1 {
            return Err(self.mismatch("add_row", format!("[{n}]"), shape_str(&bv.shape)));
        }
        let mut value = av.clone();
        for row in value.data.chunks_mut(n) {
            add_into(row, &bv.data);
        }
        Ok(self.push(Op::AddRow(a, b), value))
    }

    /// `alpha * a + beta`.
    pub fn affine(&mut self, a: NodeId, alpha: f64, beta: f64) -> Result<NodeId, TensorError> {
        let mut value = self.node(a)?.clone();
        value.data.iter_mut().for_each(|v| *v = alpha * *v + beta);
        Ok(self.push(Op::Affine(a, alpha), value))
    }

    pub fn scale(&mut self, a: NodeId, alpha: f64) -> Result<NodeId, TensorError> {
        self.affine(a, alpha, 0.0)
    }

    /// Multiplies every element of `a` by the one-element node `s`.
    pub fn mul_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId, TensorError> {
        let sv = self.node(s)?;
        let Some(k) = sv.item() else {
            return Err(self.mismatch("mul_scalar", "[1]".into(), shape_str(&sv.shape)));
        };
        let mut value = self.node(a)?.clone();
        value.data.iter_mut().for_each(|v| *v *= k);
        Ok(self.push(Op::MulScalar(a, s), value))
    }

    fn map(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> Result<NodeId, TensorError> {
        let mut value = self.node(a)?.clone();
        value.data.iter_mut().for_each(|v| *v = f(*v));
        Ok(self.push(op, value))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        self.map(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        self.map(a, Op::Log(a), f64::ln)
    }

    /// Row-wise softmax over the last dimension (max-shifted).
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let value = softmax_rows(self.node(a)?);
        Ok(self.push(Op::Softmax(a), value))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let value = log_softmax_rows(self.node(a)?);
        Ok(self.push(Op::LogSoftmax(a), value))
    }

    /// Concatenates along the last dimension; all parts need equal row counts.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::InvalidArgument("concat of nothing".into()));
        };
        let rows = self.node(first)?.rows();
        let lead = self.node(first)?.shape.clone();
        let mut total = 0;
        for &p in parts {
            let v = self.node(p)?;
            if v.rows() != rows || v.shape.len() != lead.len() {
                return Err(self.mismatch(
                    "concat",
                    format!("{rows} rows like {lead:?}"),
                    shape_str(&v.shape),
                ));
            }
            total += v.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(r));
            }
        }
        let value = Tensor {
            shape: with_last(&lead, total),
            data,
        };
        Ok(self.push(Op::Concat(parts.to_vec()), value))
    }

    /// Columns `start..start + len` of the last dimension.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId, TensorError> {
        let av = self.node(a)?;
        let cols = av.cols();
        if len == 0 || start + len > cols {
            return Err(self.mismatch(
                "slice",
                format!("{start}+{len} <= {cols}"),
                shape_str(&av.shape),
            ));
        }
        let mut data = Vec::with_capacity(av.rows() * len);
        for r in 0..av.rows() {
            data.extend_from_slice(&av.row(r)[start..start + len]);
        }
        let value = Tensor {
            shape: with_last(&av.shape, len),
            data,
        };
        Ok(self.push(Op::Slice(a, start), value))
    }

    /// Rows of the matrix `a [V, n]` selected by `ids`, as `[ids.len(), n]`.
    pub fn gather(&mut self, a: NodeId, ids: &[usize]) -> Result<NodeId, TensorError> {
        let av = self.node(a)?;
        if av.shape.len() != 2 || ids.is_empty() || ids.iter().any(|&i| i >= av.shape[0]) {
            return Err(self.mismatch(
                "gather",
                format!("matrix with more than {:?} rows", ids.iter().max()),
                shape_str(&av.shape),
            ));
        }
        let n = av.cols();
        let mut data = Vec::with_capacity(ids.len() * n);
        for &i in ids {
            data.extend_from_slice(av.row(i));
        }
        let value = Tensor {
            shape: vec![ids.len(), n],
            data,
        };
        Ok(self.push(Op::Gather(a, ids.to_vec()), value))
    }

    /// A single row of `a [V, n]` as a vector `[n]`.
    pub fn row(&mut self, a: NodeId, id: usize) -> Result<NodeId, TensorError> {
        let g = self.gather(a, &[id])?;
        let n = self.nodes[g.0].value.cols();
        self.nodes[g.0].value.shape = vec![n];
        Ok(g)
    }

    /// Stacks vectors `[n]` into a matrix `[k, n]`.
    pub fn stack(&mut self, rows: &[NodeId]) -> Result<NodeId, TensorError> {
        let Some(&first) = rows.first() else {
            return Err(TensorError::InvalidArgument("stack of nothing".into()));
        };
        let n = self.node(first)?.len();
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            let v = self.node(r)?;
            if v.shape != [n] {
                return Err(self.mismatch("stack", format!("[{n}]"), shape_str(&v.shape)));
            }
            data.extend_from_slice(&v.data);
        }
        let value = Tensor {
            shape: vec![rows.len(), n],
            data,
        };
        Ok(self.push(Op::Stack(rows.to_vec()), value))
    }

    /// One element per row: `out[r] = a[r, idx[r]]`, shape `[rows]`.
    pub fn pick(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId, TensorError> {
        let av = self.node(a)?;
        let cols = av.cols();
        if idx.len() != av.rows() || idx.iter().any(|&i| i >= cols) {
            return Err(self.mismatch(
                "pick",
                format!("{} indices below {cols}", av.rows()),
                format!("{idx:?}"),
            ));
        }
        let data = idx.iter().enumerate().map(|(r, &i)| av.data[r * cols + i]).collect();
        let value = Tensor {
            shape: vec![idx.len()],
            data,
        };
        Ok(self.push(Op::Pick(a, idx.to_vec()), value))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let s = self.node(a)?.data.iter().sum();
        Ok(self.push(Op::Sum(a), Tensor::scalar(s)))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let av = self.node(a)?;
        let s = av.data.iter().sum::<f64>() / av.len() as f64;
        Ok(self.push(Op::Mean(a), Tensor::scalar(s)))
    }

    /// Scatter-adds the vector `a [n]` into a zero vector of `out_len` slots.
    /// Repeated indices accumulate.
    pub fn scatter(&mut self, a: NodeId, idx: &[usize], out_len: usize) -> Result<NodeId, TensorError> {
        let av = self.node(a)?;
        if av.shape.len() != 1 || idx.len() != av.len() || idx.iter().any(|&i| i >= out_len) {
            return Err(self.mismatch(
                "scatter",
                format!("[{}] with indices below {out_len}", idx.len()),
                shape_str(&av.shape),
            ));
        }
        let mut data = vec![0.0; out_len];
        for (&i, &v) in idx.iter().zip(&av.data) {
            data[i] += v;
        }
        Ok(self.push(Op::Scatter(a, idx.to_vec()), Tensor::vector(data)))
    }

    /// Extends the vector `a [n]` with zeros up to `out_len`.
    pub fn pad(&mut self, a: NodeId, out_len: usize) -> Result<NodeId, TensorError> {
        let av = self.node(a)?;
        if av.shape.len() != 1 || out_len < av.len() {
            return Err(self.mismatch("pad", format!("[n <= {out_len}]"), shape_str(&av.shape)));
        }
        let mut data = av.data.clone();
        data.resize(out_len, 0.0);
        Ok(self.push(Op::Pad(a), Tensor::vector(data)))
    }

    /// Locates the first node holding a non-finite value.
    pub fn check_finite(&self) -> Result<(), TensorError> {
        match self.nodes.iter().position(|n| !n.value.is_finite()) {
            Some(i) => Err(TensorError::NonFinite {
                node: i,
                op: self.nodes[i].op.name(),
            }),
            None => Ok(()),
        }
    }

    /// Reverse sweep from a scalar loss. Parameters not reached get zero
    /// gradients.
    pub fn backward(&self, loss: NodeId, store: &ParamStore) -> Result<Gradients, TensorError> {
        let lv = self.node(loss)?;
        if lv.len() != 1 {
            return Err(TensorError::NotScalar {
                node: loss.0,
                shape: lv.shape.clone(),
            });
        }
        let mut out = Gradients::zeros_like(store);
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            match &node.op {
                Op::Input => {}
                Op::Param(p) => add_into(out.get_mut(*p).data_mut(), &g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (k, n) = (bv.shape[0], bv.shape[1]);
                    let m = av.rows();
                    let ga = self.grad_buf(&mut grads, *a);
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &bv.data[p * n..(p + 1) * n];
                            ga[r * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                    let gb = self.grad_buf(&mut grads, *b);
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let apk = av.data[r * k + p];
                            if apk == 0.0 {
                                continue;
                            }
                            for (d, &x) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += apk * x;
                            }
                        }
                    }
                }
                Op::MatMulT(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (n, k) = (bv.shape[0], bv.shape[1]);
                    let m = av.rows();
                    let ga = self.grad_buf(&mut grads, *a);
                    for r in 0..m {
                        for j in 0..n {
                            let grj = g[r * n + j];
                            if grj == 0.0 {
                                continue;
                            }
                            for (d, &x) in ga[r * k..(r + 1) * k].iter_mut().zip(&bv.data[j * k..(j + 1) * k]) {
                                *d += grj * x;
                            }
                        }
                    }
                    let gb = self.grad_buf(&mut grads, *b);
                    for r in 0..m {
                        let arow = &av.data[r * k..(r + 1) * k];
                        for j in 0..n {
                            let grj = g[r * n + j];
                            if grj == 0.0 {
                                continue;
                            }
                            for (d, &x) in gb[j * k..(j + 1) * k].iter_mut().zip(arow) {
                                *d += grj * x;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(self.grad_buf(&mut grads, *a), &g);
                    add_into(self.grad_buf(&mut grads, *b), &g);
                }
                Op::Sub(a, b) => {
                    add_into(self.grad_buf(&mut grads, *a), &g);
                    let gb = self.grad_buf(&mut grads, *b);
                    for (d, x) in gb.iter_mut().zip(&g) {
                        *d -= x;
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = self.grad_buf(&mut grads, *a);
                    for ((d, x), y) in ga.iter_mut().zip(&g).zip(&bv.data) {
                        *d += x * y;
                    }
                    let gb = self.grad_buf(&mut grads, *b);
                    for ((d, x), y) in gb.iter_mut().zip(&g).zip(&av.data) {
                        *d += x * y;
                    }
                }
                Op::AddRow(a, b) => {
                    add_into(self.grad_buf(&mut grads, *a), &g);
                    let gb = self.grad_buf(&mut grads, *b);
                    let n = gb.len();
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                }
                Op::Affine(a, alpha) => {
                    let ga = self.grad_buf(&mut grads, *a);
                    for (d, x) in ga.iter_mut().zip(&g) {
                        *d += alpha * x;
                    }
                }
                Op::MulScalar(a, s) => {
                    let (av, k) = (self.value(*a), self.value(*s).data[0]);
                    let ga = self.grad_buf(&mut grads, *a);
                    for (d, x) in ga.iter_mut().zip(&g) {
                        *d += k * x;
                    }
                    let dot: f64 = g.iter().zip(&av.data).map(|(x, y)| x * y).sum();
                    self.grad_buf(&mut grads, *s)[0] += dot;
                }
                Op::Sigmoid(a) => {
                    let ga = self.grad_buf(&mut grads, *a);
                    for ((d, x), y) in ga.iter_mut().zip(&g).zip(&y.data) {
                        *d += x * y * (1.0 - y);
                    }
                }
                Op::Tanh(a) => {
                    let ga = self.grad_buf(&mut grads, *a);
                    for ((d, x), y) in ga.iter_mut().zip(&g).zip(&y.data) {
                        *d += x * (1.0 - y * y);
                    }
                }
                Op::Exp(a) => {
                    let ga = self.grad_buf(&mut grads, *a);
                    for ((d, x), y) in ga.iter_mut().zip(&g).zip(&y.data) {
                        *d += x * y;
                    }
                }
                Op::Log(a) => {
                    let av = self.value(*a);
                    let ga = self.grad_buf(&mut grads, *a);
                    for ((d, x), v) in ga.iter_mut().zip(&g).zip(&av.data) {
                        *d += x / v;
                    }
                }
                Op::Softmax(a) => {
                    let n = y.cols();
                    let ga = self.grad_buf(&mut grads, *a);
                    for ((drow, grow), yrow) in ga.chunks_mut(n).zip(g.chunks(n)).zip(y.data.chunks(n)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                        for ((d, x), yv) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += yv * (x - dot);
                        }
                    }
                }
                Op::LogSoftmax(a) => {
                    let n = y.cols();
                    let ga = self.grad_buf(&mut grads, *a);
                    for ((drow, grow), yrow) in ga.chunks_mut(n).zip(g.chunks(n)).zip(y.data.chunks(n)) {
                        let total: f64 = grow.iter().sum();
                        for ((d, x), yv) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += x - yv.exp() * total;
                        }
                    }
                }
                Op::Concat(parts) => {
                    let total = y.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let gp = self.grad_buf(&mut grads, p);
                        for (r, drow) in gp.chunks_mut(w).enumerate() {
                            add_into(drow, &g[r * total + offset..r * total + offset + w]);
                        }
                        offset += w;
                    }
                }
                Op::Slice(a, start) => {
                    let w = y.cols();
                    let cols = self.value(*a).cols();
                    let ga = self.grad_buf(&mut grads, *a);
                    for (r, grow) in g.chunks(w).enumerate() {
                        add_into(&mut ga[r * cols + start..r * cols + start + w], grow);
                    }
                }
                Op::Gather(a, ids) => {
                    let n = y.cols();
                    let ga = self.grad_buf(&mut grads, *a);
                    for (grow, &i) in g.chunks(n).zip(ids) {
                        add_into(&mut ga[i * n..(i + 1) * n], grow);
                    }
                }
                Op::Stack(rows) => {
                    let n = y.cols();
                    for (&r, grow) in rows.iter().zip(g.chunks(n)) {
                        add_into(self.grad_buf(&mut grads, r), grow);
                    }
                }
                Op::Pick(a, idx) => {
                    let cols = self.value(*a).cols();
                    let ga = self.grad_buf(&mut grads, *a);
                    for (r, (&i, x)) in idx.iter().zip(&g).enumerate() {
                        ga[r * cols + i] += x;
                    }
                }
                Op::Sum(a) => {
                    let ga = self.grad_buf(&mut grads, *a);
                    ga.iter_mut().for_each(|d| *d += g[0]);
                }
                Op::Mean(a) => {
                    let ga = self.grad_buf(&mut grads, *a);
                    let k = g[0] / ga.len() as f64;
                    ga.iter_mut().for_each(|d| *d += k);
                }
                Op::Scatter(a, idx) => {
                    let ga = self.grad_buf(&mut grads, *a);
                    for (d, &i) in ga.iter_mut().zip(idx) {
                        *d += g[i];
                    }
                }
                Op::Pad(a) => {
                    let ga = self.grad_buf(&mut grads, *a);
                    let n = ga.len();
                    add_into(ga, &g[..n]);
                }
            }
        }
        Ok(out)
    }

    fn grad_buf<'a>(&self, grads: &'a mut [Option<Vec<f64>>], id: NodeId) -> &'a mut [f64] {
        let len = self.nodes[id.0].value.len();
        grads[id.0].get_or_insert_with(|| vec![0.0; len])
    }
}
