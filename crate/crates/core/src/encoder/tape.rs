//! Reverse-mode differentiation over small dense tensors.
//!
//! Operations are recorded in execution order, so a single reverse sweep
//! visits every node exactly once.

use super::params::{EncoderParams, ParamId};
use super::tensor::Tensor;
use crate::util::dot;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// One filter bank of a convolution: weights `(filters, width * in_dim)`,
/// bias `(1, filters)` and the window width.
#[derive(Clone, Copy, Debug)]
pub struct ConvBank {
    pub weight: ParamId,
    pub bias: ParamId,
    pub width: usize,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Gather { table: ParamId, ids: Vec<usize> },
    ConvTanh { input: NodeId, banks: Vec<ConvBank> },
    MaxRows { input: NodeId, argmax: Vec<usize> },
    MeanRows { input: NodeId },
    AttnPool { input: NodeId, attn: ParamId, context: Option<NodeId>, weights: Vec<f64> },
    Cosine { a: NodeId, b: NodeId, na: f64, nb: f64 },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Affine { input: NodeId, scale: f64 },
    Relu(NodeId),
    Square(NodeId),
    Sum(Vec<NodeId>),
    SumAll(NodeId),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Parameter gradients, shaped like [`EncoderParams::tensors`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        Self {
            tensors: params
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.rows, t.cols))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
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

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.data[0]
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// A constant leaf (receives no gradient).
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn constant(&mut self, x: f64) -> NodeId {
        self.input(Tensor::from_vec(1, 1, vec![x]))
    }

    /// A whole parameter tensor as a node.
    pub fn param(&mut self, params: &EncoderParams, id: ParamId) -> NodeId {
        self.push(params.get(id).clone(), Op::Param(id))
    }

    /// Rows `ids` of an embedding table.
    pub fn gather(&mut self, params: &EncoderParams, table: ParamId, ids: Vec<usize>) -> NodeId {
        let t = params.get(table);
        let mut data = Vec::with_capacity(ids.len() * t.cols);
        for &i in &ids {
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor::from_vec(ids.len(), t.cols, data);
        self.push(value, Op::Gather { table, ids })
    }

    /// Same-length 1-d convolution over rows followed by `tanh`. Each bank
    /// pads `(w-1)/2` zero rows on the left and the rest on the right, so the
    /// output has one row per input row and `sum(filters)` columns.
    pub fn conv_tanh(&mut self, params: &EncoderParams, input: NodeId, banks: Vec<ConvBank>) -> NodeId {
        let x = &self.nodes[input.0].value;
        let (len, in_dim) = (x.rows, x.cols);
        let total: usize = banks.iter().map(|b| params.get(b.bias).cols).sum();
        let mut out = Tensor::zeros(len, total);
        let mut offset = 0;
        for bank in &banks {
            let w = params.get(bank.weight);
            let b = params.get(bank.bias);
            let filters = b.cols;
            debug_assert_eq!(w.cols, bank.width * in_dim);
            let left = (bank.width - 1) / 2;
            for t in 0..len {
                for f in 0..filters {
                    let wf = w.row(f);
                    let mut acc = b.data[f];
                    for k in 0..bank.width {
                        let src = t + k;
                        if src < left || src - left >= len {
                            continue;
                        }
                        acc += dot(&wf[k * in_dim..(k + 1) * in_dim], x.row(src - left));
                    }
                    out.data[t * total + offset + f] = acc.tanh();
                }
            }
            offset += filters;
        }
        self.push(out, Op::ConvTanh { input, banks })
    }

    /// Column-wise maximum over rows; ties go to the earliest row.
    pub fn max_rows(&mut self, input: NodeId) -> NodeId {
        let x = &self.nodes[input.0].value;
        let mut argmax = vec![0usize; x.cols];
        let mut out = x.row(0).to_vec();
        for r in 1..x.rows {
            for (c, v) in x.row(r).iter().enumerate() {
                if *v > out[c] {
                    out[c] = *v;
                    argmax[c] = r;
                }
            }
        }
        let value = Tensor::from_vec(1, x.cols, out);
        self.push(value, Op::MaxRows { input, argmax })
    }

    pub fn mean_rows(&mut self, input: NodeId) -> NodeId {
        let x = &self.nodes[input.0].value;
        let mut out = vec![0.0; x.cols];
        for r in 0..x.rows {
            for (o, v) in out.iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        let inv = 1.0 / x.rows as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        let value = Tensor::from_vec(1, x.cols, out);
        self.push(value, Op::MeanRows { input })
    }

    /// Attention pooling: row scores `h_t . (a + c)` with the attention
    /// parameter `a` and optional context `c`, softmax-normalized weights,
    /// and the weighted sum of rows.
    pub fn attn_pool(
        &mut self,
        params: &EncoderParams,
        input: NodeId,
        attn: ParamId,
        context: Option<NodeId>,
    ) -> NodeId {
        let h = &self.nodes[input.0].value;
        let mut query = params.get(attn).data.clone();
        if let Some(c) = context {
            for (q, v) in query.iter_mut().zip(&self.nodes[c.0].value.data) {
                *q += v;
            }
        }
        let scores: Vec<f64> = (0..h.rows).map(|r| dot(h.row(r), &query)).collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= z);
        let mut out = vec![0.0; h.cols];
        for (r, w) in weights.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(h.row(r)) {
                *o += w * v;
            }
        }
        let value = Tensor::from_vec(1, h.cols, out);
        self.push(value, Op::AttnPool { input, attn, context, weights })
    }

    /// Cosine similarity of two vectors; 0 when either has zero norm.
    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value.data;
        let vb = &self.nodes[b.0].value.data;
        let na = dot(va, va).sqrt();
        let nb = dot(vb, vb).sqrt();
        let c = if na == 0.0 || nb == 0.0 {
            log::warn!("zero-norm embedding in cosine; similarity set to 0");
            0.0
        } else {
            dot(va, vb) / (na * nb)
        };
        self.push(Tensor::from_vec(1, 1, vec![c]), Op::Cosine { a, b, na, nb })
    }

    fn elementwise(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64, op: Op) -> NodeId {
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        assert_eq!(va.data.len(), vb.data.len(), "shape mismatch");
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::from_vec(va.rows, va.cols, data);
        self.push(value, op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.elementwise(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.elementwise(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn scale(&mut self, input: NodeId, scale: f64) -> NodeId {
        let v = &self.nodes[input.0].value;
        let value = Tensor::from_vec(v.rows, v.cols, v.data.iter().map(|x| x * scale).collect());
        self.push(value, Op::Affine { input, scale })
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let v = &self.nodes[input.0].value;
        let value = Tensor::from_vec(v.rows, v.cols, v.data.iter().map(|x| x.max(0.0)).collect());
        self.push(value, Op::Relu(input))
    }

    pub fn square(&mut self, input: NodeId) -> NodeId {
        let v = &self.nodes[input.0].value;
        let value = Tensor::from_vec(v.rows, v.cols, v.data.iter().map(|x| x * x).collect());
        self.push(value, Op::Square(input))
    }

    /// Sum of scalar nodes; an empty list gives 0.
    pub fn sum(&mut self, items: Vec<NodeId>) -> NodeId {
        let total = items.iter().map(|i| self.nodes[i.0].value.data[0]).sum();
        self.push(Tensor::from_vec(1, 1, vec![total]), Op::Sum(items))
    }

    pub fn sum_all(&mut self, input: NodeId) -> NodeId {
        let total = self.nodes[input.0].value.data.iter().sum();
        self.push(Tensor::from_vec(1, 1, vec![total]), Op::SumAll(input))
    }

    /// Gradients of the scalar node `loss` with respect to every parameter.
    pub fn backward(&self, params: &EncoderParams, loss: NodeId) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(params);
        self.backward_into(params, loss, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Accumulates `seed * d(loss)/d(param)` into `grads`.
    pub fn backward_into(&self, params: &EncoderParams, loss: NodeId, seed: f64, grads: &mut Gradients) -> Result<()> {
        let lv = self.scalar(loss);
        if !lv.is_finite() {
            return Err(Error::NonFinite(format!("loss value {lv}")));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![seed]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => {
                    for (d, v) in grads.tensors[p.0].data.iter_mut().zip(&g) {
                        *d += v;
                    }
                }
                Op::Gather { table, ids } => {
                    let t = &mut grads.tensors[table.0];
                    let cols = t.cols;
                    for (r, &i) in ids.iter().enumerate() {
                        for (d, v) in t.row_mut(i).iter_mut().zip(&g[r * cols..(r + 1) * cols]) {
                            *d += v;
                        }
                    }
                }
                Op::ConvTanh { input, banks } => {
                    let x = &self.nodes[input.0].value;
                    let y = &node.value;
                    let (len, in_dim, total) = (x.rows, x.cols, y.cols);
                    let mut dx = vec![0.0; x.data.len()];
                    let mut offset = 0;
                    for bank in banks {
                        let w = params.get(bank.weight);
                        let filters = w.rows;
                        let left = (bank.width - 1) / 2;
                        for t in 0..len {
                            for f in 0..filters {
                                let o = t * total + offset + f;
                                let dpre = g[o] * (1.0 - y.data[o] * y.data[o]);
                                if dpre == 0.0 {
                                    continue;
                                }
                                grads.tensors[bank.bias.0].data[f] += dpre;
                                for k in 0..bank.width {
                                    let src = t + k;
                                    if src < left || src - left >= len {
                                        continue;
                                    }
                                    let src = src - left;
                                    let wk = &w.row(f)[k * in_dim..(k + 1) * in_dim];
                                    let xs = x.row(src);
                                    let dw = &mut grads.tensors[bank.weight.0].row_mut(f)[k * in_dim..(k + 1) * in_dim];
                                    for e in 0..in_dim {
                                        dw[e] += dpre * xs[e];
                                        dx[src * in_dim + e] += dpre * wk[e];
                                    }
                                }
                            }
                        }
                        offset += filters;
                    }
                    accumulate(&mut adj, *input, dx);
                }
                Op::MaxRows { input, argmax } => {
                    let x = &self.nodes[input.0].value;
                    let mut dx = vec![0.0; x.data.len()];
                    for (c, &r) in argmax.iter().enumerate() {
                        dx[r * x.cols + c] += g[c];
                    }
                    accumulate(&mut adj, *input, dx);
                }
                Op::MeanRows { input } => {
                    let x = &self.nodes[input.0].value;
                    let inv = 1.0 / x.rows as f64;
                    let mut dx = Vec::with_capacity(x.data.len());
                    for _ in 0..x.rows {
                        dx.extend(g.iter().map(|v| v * inv));
                    }
                    accumulate(&mut adj, *input, dx);
                }
                Op::AttnPool { input, attn, context, weights } => {
                    let h = &self.nodes[input.0].value;
                    let mut query = params.get(*attn).data.clone();
                    if let Some(c) = context {
                        for (q, v) in query.iter_mut().zip(&self.nodes[c.0].value.data) {
                            *q += v;
                        }
                    }
                    // d weight_t = g . h_t ; d score_t = w_t (dw_t - sum_s w_s dw_s)
                    let dw: Vec<f64> = (0..h.rows).map(|r| dot(&g, h.row(r))).collect();
                    let mean_dw: f64 = weights.iter().zip(&dw).map(|(w, d)| w * d).sum();
                    let mut dh = vec![0.0; h.data.len()];
                    let mut dquery = vec![0.0; h.cols];
                    for r in 0..h.rows {
                        let ds = weights[r] * (dw[r] - mean_dw);
                        let hr = h.row(r);
                        let dhr = &mut dh[r * h.cols..(r + 1) * h.cols];
                        for c in 0..h.cols {
                            dhr[c] += weights[r] * g[c] + ds * query[c];
                            dquery[c] += ds * hr[c];
                        }
                    }
                    for (d, v) in grads.tensors[attn.0].data.iter_mut().zip(&dquery) {
                        *d += v;
                    }
                    if let Some(c) = context {
                        accumulate(&mut adj, *c, dquery);
                    }
                    accumulate(&mut adj, *input, dh);
                }
                Op::Cosine { a, b, na, nb } => {
                    if *na == 0.0 || *nb == 0.0 {
                        continue;
                    }
                    let va = &self.nodes[a.0].value.data;
                    let vb = &self.nodes[b.0].value.data;
                    let cos = node.value.data[0];
                    let gs = g[0];
                    let inv = 1.0 / (na * nb);
                    let da = va
                        .iter()
                        .zip(vb)
                        .map(|(x, y)| gs * (y * inv - cos * x / (na * na)))
                        .collect();
                    let db = va
                        .iter()
                        .zip(vb)
                        .map(|(x, y)| gs * (x * inv - cos * y / (nb * nb)))
                        .collect();
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, g.iter().map(|v| -v).collect());
                    accumulate(&mut adj, *a, g);
                }
                Op::Affine { input, scale } => {
                    accumulate(&mut adj, *input, g.iter().map(|v| v * scale).collect());
                }
                Op::Relu(input) => {
                    // Subgradient 0 at the kink.
                    let x = &self.nodes[input.0].value.data;
                    let dx = g.iter().zip(x).map(|(v, x)| if *x > 0.0 { *v } else { 0.0 }).collect();
                    accumulate(&mut adj, *input, dx);
                }
                Op::Square(input) => {
                    let x = &self.nodes[input.0].value.data;
                    let dx = g.iter().zip(x).map(|(v, x)| 2.0 * x * v).collect();
                    accumulate(&mut adj, *input, dx);
                }
                Op::Sum(items) => {
                    for i in items {
                        accumulate(&mut adj, *i, vec![g[0]]);
                    }
                }
                Op::SumAll(input) => {
                    let n = self.nodes[input.0].value.data.len();
                    accumulate(&mut adj, *input, vec![g[0]; n]);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], id: NodeId, g: Vec<f64>) {
    match &mut adj[id.0] {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(&g) {
                *a += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}
