//! Reverse-mode automatic differentiation over a flat tape of tensor ops.
//!
//! Values are computed eagerly as nodes are appended; `backward` walks the
//! tape in reverse and accumulates gradients for every node reachable from
//! the loss that descends from a `leaf`. Softmax and log-softmax subtract the
//! row maximum before exponentiating.

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Scale(NodeId, f32),
    Relu(NodeId),
    Exp(NodeId),
    Clamp(NodeId, f32, f32),
    MinElem(NodeId, NodeId),
    LayerNorm(NodeId, NodeId, NodeId),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    SliceCols(NodeId, usize),
    SliceRows(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    SumAll(NodeId),
    MeanAll(NodeId),
    SumRows(NodeId),
    SumCols(NodeId),
    Gather(NodeId, usize, usize),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    /// Saved per-row statistics for layer norm: (mean, rstd) pairs.
    aux: Vec<f32>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

const LN_EPS: f64 = 1e-5;

impl Graph {
    pub fn new() -> Self {
        Graph::default()
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

    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take_grad(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool, aux: Vec<f32>) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad, aux });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Gradient-tracked input (parameters).
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf, true, Vec::new())
    }

    /// Untracked input (observations, stored targets).
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Constant, false, Vec::new())
    }

    pub fn scalar_const(&mut self, v: f32) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        let needs = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a, b), needs, Vec::new())
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        let needs = self.ng(a);
        self.push(v, Op::Transpose(a), needs, Vec::new())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "add shape mismatch");
        let mut v = ta.clone();
        v.add_assign(tb);
        let needs = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), needs, Vec::new())
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "sub shape mismatch");
        let data = ta.data.iter().zip(tb.data.iter()).map(|(x, y)| x - y).collect();
        let v = Tensor::from_vec(ta.rows, ta.cols, data);
        let needs = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub(a, b), needs, Vec::new())
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "mul shape mismatch");
        let data = ta.data.iter().zip(tb.data.iter()).map(|(x, y)| x * y).collect();
        let v = Tensor::from_vec(ta.rows, ta.cols, data);
        let needs = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a, b), needs, Vec::new())
    }

    /// Broadcast-add a single-row bias over every row.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let (tx, tb) = (self.value(x), self.value(bias));
        assert_eq!(tb.rows, 1, "bias must be a row vector");
        assert_eq!(tx.cols, tb.cols, "bias width mismatch");
        let mut v = tx.clone();
        for r in 0..v.rows {
            for c in 0..v.cols {
                *v.at_mut(r, c) += tb.data[c];
            }
        }
        let needs = self.ng(x) || self.ng(bias);
        self.push(v, Op::AddBias(x, bias), needs, Vec::new())
    }

    pub fn scale(&mut self, a: NodeId, s: f32) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        let needs = self.ng(a);
        self.push(v, Op::Scale(a, s), needs, Vec::new())
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.scale(a, -1.0)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        let needs = self.ng(a);
        self.push(v, Op::Relu(a), needs, Vec::new())
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.exp());
        let needs = self.ng(a);
        self.push(v, Op::Exp(a), needs, Vec::new())
    }

    /// Clamp with zero gradient outside the open interval.
    pub fn clamp(&mut self, a: NodeId, lo: f32, hi: f32) -> NodeId {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        let needs = self.ng(a);
        self.push(v, Op::Clamp(a, lo, hi), needs, Vec::new())
    }

    /// Elementwise minimum; gradient follows the smaller side (ties to `a`).
    pub fn min_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape());
        let data = ta.data.iter().zip(tb.data.iter()).map(|(x, y)| x.min(*y)).collect();
        let v = Tensor::from_vec(ta.rows, ta.cols, data);
        let needs = self.ng(a) || self.ng(b);
        self.push(v, Op::MinElem(a, b), needs, Vec::new())
    }

    /// Row-wise layer normalization with learnable gain and bias (row vectors).
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let tx = self.value(x).clone();
        let tg = self.value(gain).clone();
        let tb = self.value(bias).clone();
        assert_eq!(tg.rows, 1);
        assert_eq!(tb.rows, 1);
        assert_eq!(tg.cols, tx.cols);
        let mut v = Tensor::zeros(tx.rows, tx.cols);
        let mut aux = Vec::with_capacity(tx.rows * 2);
        for r in 0..tx.rows {
            let row = &tx.data[r * tx.cols..(r + 1) * tx.cols];
            let mean = row.iter().map(|x| *x as f64).sum::<f64>() / tx.cols as f64;
            let var = row.iter().map(|x| (*x as f64 - mean).powi(2)).sum::<f64>() / tx.cols as f64;
            let rstd = 1.0 / (var + LN_EPS).sqrt();
            aux.push(mean as f32);
            aux.push(rstd as f32);
            for c in 0..tx.cols {
                let xhat = ((row[c] as f64 - mean) * rstd) as f32;
                *v.at_mut(r, c) = tg.data[c] * xhat + tb.data[c];
            }
        }
        let needs = self.ng(x) || self.ng(gain) || self.ng(bias);
        self.push(v, Op::LayerNorm(x, gain, bias), needs, aux)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let mut v = Tensor::zeros(ta.rows, ta.cols);
        for r in 0..ta.rows {
            let row = &ta.data[r * ta.cols..(r + 1) * ta.cols];
            let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let mut denom = 0.0f64;
            for c in 0..ta.cols {
                denom += ((row[c] - max) as f64).exp();
            }
            for c in 0..ta.cols {
                *v.at_mut(r, c) = (((row[c] - max) as f64).exp() / denom) as f32;
            }
        }
        let needs = self.ng(a);
        self.push(v, Op::SoftmaxRows(a), needs, Vec::new())
    }

    pub fn log_softmax_rows(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let mut v = Tensor::zeros(ta.rows, ta.cols);
        for r in 0..ta.rows {
            let row = &ta.data[r * ta.cols..(r + 1) * ta.cols];
            let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let mut denom = 0.0f64;
            for c in 0..ta.cols {
                denom += ((row[c] - max) as f64).exp();
            }
            let lse = max as f64 + denom.ln();
            for c in 0..ta.cols {
                *v.at_mut(r, c) = (row[c] as f64 - lse) as f32;
            }
        }
        let needs = self.ng(a);
        self.push(v, Op::LogSoftmaxRows(a), needs, Vec::new())
    }

    /// Columns `[start, start + width)` as a new tensor.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, width: usize) -> NodeId {
        let ta = self.value(a);
        assert!(start + width <= ta.cols);
        let mut v = Tensor::zeros(ta.rows, width);
        for r in 0..ta.rows {
            for c in 0..width {
                *v.at_mut(r, c) = ta.at(r, start + c);
            }
        }
        let needs = self.ng(a);
        self.push(v, Op::SliceCols(a, start), needs, Vec::new())
    }

    /// Rows `[start, start + height)` as a new tensor.
    pub fn slice_rows(&mut self, a: NodeId, start: usize, height: usize) -> NodeId {
        let ta = self.value(a);
        assert!(start + height <= ta.rows);
        let mut v = Tensor::zeros(height, ta.cols);
        for r in 0..height {
            for c in 0..ta.cols {
                *v.at_mut(r, c) = ta.at(start + r, c);
            }
        }
        let needs = self.ng(a);
        self.push(v, Op::SliceRows(a, start), needs, Vec::new())
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows;
        let total: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut v = Tensor::zeros(rows, total);
        let mut offset = 0;
        for p in parts {
            let tp = self.value(*p);
            assert_eq!(tp.rows, rows);
            for r in 0..rows {
                for c in 0..tp.cols {
                    *v.at_mut(r, offset + c) = tp.at(r, c);
                }
            }
            offset += tp.cols;
        }
        let needs = parts.iter().any(|p| self.ng(*p));
        self.push(v, Op::ConcatCols(parts.to_vec()), needs, Vec::new())
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum() as f32);
        let needs = self.ng(a);
        self.push(v, Op::SumAll(a), needs, Vec::new())
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let v = Tensor::scalar((ta.sum() / ta.len() as f64) as f32);
        let needs = self.ng(a);
        self.push(v, Op::MeanAll(a), needs, Vec::new())
    }

    /// Collapse rows: `[r, c] -> [1, c]`.
    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let mut v = Tensor::zeros(1, ta.cols);
        for c in 0..ta.cols {
            let mut acc = 0.0f64;
            for r in 0..ta.rows {
                acc += ta.at(r, c) as f64;
            }
            v.data[c] = acc as f32;
        }
        let needs = self.ng(a);
        self.push(v, Op::SumRows(a), needs, Vec::new())
    }

    /// Collapse columns: `[r, c] -> [r, 1]`.
    pub fn sum_cols(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let mut v = Tensor::zeros(ta.rows, 1);
        for r in 0..ta.rows {
            let mut acc = 0.0f64;
            for c in 0..ta.cols {
                acc += ta.at(r, c) as f64;
            }
            v.data[r] = acc as f32;
        }
        let needs = self.ng(a);
        self.push(v, Op::SumCols(a), needs, Vec::new())
    }

    /// Single element as a scalar node.
    pub fn gather(&mut self, a: NodeId, r: usize, c: usize) -> NodeId {
        let v = Tensor::scalar(self.value(a).at(r, c));
        let needs = self.ng(a);
        self.push(v, Op::Gather(a, r, c), needs, Vec::new())
    }

    /// Mean of a set of scalar nodes.
    pub fn mean_of(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let row = self.concat_cols(parts);
        self.mean_all(row)
    }

    /// Seed d(loss)/d(loss) = 1 and accumulate gradients down the tape.
    pub fn backward(&mut self, loss: NodeId) {
        assert_eq!(self.value(loss).len(), 1, "backward requires a scalar loss");
        self.grads = Vec::new();
        self.grads.resize_with(self.nodes.len(), || None);
        self.grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad || self.grads[i].is_none() {
                continue;
            }
            let grad_out = self.grads[i].take().unwrap();
            self.propagate(i, &grad_out);
            self.grads[i] = Some(grad_out);
        }
    }

    fn acc(&mut self, id: NodeId, delta: Tensor) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut self.grads[id.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&mut self, i: usize, gout: &Tensor) {
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let da = gout.matmul(&self.value(b).transpose());
                let db = self.value(a).transpose().matmul(gout);
                self.acc(a, da);
                self.acc(b, db);
            }
            Op::Transpose(a) => self.acc(a, gout.transpose()),
            Op::Add(a, b) => {
                self.acc(a, gout.clone());
                self.acc(b, gout.clone());
            }
            Op::Sub(a, b) => {
                self.acc(a, gout.clone());
                self.acc(b, gout.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let ta = self.value(a).clone();
                let tb = self.value(b).clone();
                let da = Tensor::from_vec(
                    gout.rows,
                    gout.cols,
                    gout.data.iter().zip(tb.data.iter()).map(|(g, y)| g * y).collect(),
                );
                let db = Tensor::from_vec(
                    gout.rows,
                    gout.cols,
                    gout.data.iter().zip(ta.data.iter()).map(|(g, x)| g * x).collect(),
                );
                self.acc(a, da);
                self.acc(b, db);
            }
            Op::AddBias(x, b) => {
                self.acc(x, gout.clone());
                let mut db = Tensor::zeros(1, gout.cols);
                for c in 0..gout.cols {
                    let mut acc = 0.0f64;
                    for r in 0..gout.rows {
                        acc += gout.at(r, c) as f64;
                    }
                    db.data[c] = acc as f32;
                }
                self.acc(b, db);
            }
            Op::Scale(a, s) => self.acc(a, gout.map(|x| x * s)),
            Op::Relu(a) => {
                let ta = self.value(a).clone();
                let da = Tensor::from_vec(
                    gout.rows,
                    gout.cols,
                    gout.data
                        .iter()
                        .zip(ta.data.iter())
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                        .collect(),
                );
                self.acc(a, da);
            }
            Op::Exp(a) => {
                let out = self.nodes[i].value.clone();
                let da = Tensor::from_vec(
                    gout.rows,
                    gout.cols,
                    gout.data.iter().zip(out.data.iter()).map(|(g, e)| g * e).collect(),
                );
                self.acc(a, da);
            }
            Op::Clamp(a, lo, hi) => {
                let ta = self.value(a).clone();
                let da = Tensor::from_vec(
                    gout.rows,
                    gout.cols,
                    gout.data
                        .iter()
                        .zip(ta.data.iter())
                        .map(|(g, x)| if *x > lo && *x < hi { *g } else { 0.0 })
                        .collect(),
                );
                self.acc(a, da);
            }
            Op::MinElem(a, b) => {
                let ta = self.value(a).clone();
                let tb = self.value(b).clone();
                let mut da = Tensor::zeros(gout.rows, gout.cols);
                let mut db = Tensor::zeros(gout.rows, gout.cols);
                for k in 0..gout.data.len() {
                    if ta.data[k] <= tb.data[k] {
                        da.data[k] = gout.data[k];
                    } else {
                        db.data[k] = gout.data[k];
                    }
                }
                self.acc(a, da);
                self.acc(b, db);
            }
            Op::LayerNorm(x, gain, bias) => {
                let tx = self.value(x).clone();
                let tg = self.value(gain).clone();
                let aux = self.nodes[i].aux.clone();
                let (rows, cols) = tx.shape();
                let mut dx = Tensor::zeros(rows, cols);
                let mut dg = Tensor::zeros(1, cols);
                let mut db = Tensor::zeros(1, cols);
                for r in 0..rows {
                    let mean = aux[r * 2] as f64;
                    let rstd = aux[r * 2 + 1] as f64;
                    let mut sum_dxhat = 0.0f64;
                    let mut sum_dxhat_xhat = 0.0f64;
                    let mut xhat = vec![0.0f64; cols];
                    let mut dxhat = vec![0.0f64; cols];
                    for c in 0..cols {
                        xhat[c] = (tx.at(r, c) as f64 - mean) * rstd;
                        dxhat[c] = gout.at(r, c) as f64 * tg.data[c] as f64;
                        sum_dxhat += dxhat[c];
                        sum_dxhat_xhat += dxhat[c] * xhat[c];
                        dg.data[c] += (gout.at(r, c) as f64 * xhat[c]) as f32;
                        db.data[c] += gout.at(r, c);
                    }
                    let n = cols as f64;
                    for c in 0..cols {
                        *dx.at_mut(r, c) =
                            (rstd * (dxhat[c] - sum_dxhat / n - xhat[c] * sum_dxhat_xhat / n))
                                as f32;
                    }
                }
                self.acc(x, dx);
                self.acc(gain, dg);
                self.acc(bias, db);
            }
            Op::SoftmaxRows(a) => {
                let y = self.nodes[i].value.clone();
                let mut da = Tensor::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let mut dot = 0.0f64;
                    for c in 0..y.cols {
                        dot += gout.at(r, c) as f64 * y.at(r, c) as f64;
                    }
                    for c in 0..y.cols {
                        *da.at_mut(r, c) =
                            ((gout.at(r, c) as f64 - dot) * y.at(r, c) as f64) as f32;
                    }
                }
                self.acc(a, da);
            }
            Op::LogSoftmaxRows(a) => {
                let y = self.nodes[i].value.clone();
                let mut da = Tensor::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let mut sum_g = 0.0f64;
                    for c in 0..y.cols {
                        sum_g += gout.at(r, c) as f64;
                    }
                    for c in 0..y.cols {
                        let p = (y.at(r, c) as f64).exp();
                        *da.at_mut(r, c) = (gout.at(r, c) as f64 - p * sum_g) as f32;
                    }
                }
                self.acc(a, da);
            }
            Op::SliceCols(a, start) => {
                let ta_shape = self.value(a).shape();
                let mut da = Tensor::zeros(ta_shape.0, ta_shape.1);
                for r in 0..gout.rows {
                    for c in 0..gout.cols {
                        *da.at_mut(r, start + c) = gout.at(r, c);
                    }
                }
                self.acc(a, da);
            }
            Op::SliceRows(a, start) => {
                let ta_shape = self.value(a).shape();
                let mut da = Tensor::zeros(ta_shape.0, ta_shape.1);
                for r in 0..gout.rows {
                    for c in 0..gout.cols {
                        *da.at_mut(start + r, c) = gout.at(r, c);
                    }
                }
                self.acc(a, da);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = self.value(p).cols;
                    let mut dp = Tensor::zeros(gout.rows, w);
                    for r in 0..gout.rows {
                        for c in 0..w {
                            *dp.at_mut(r, c) = gout.at(r, offset + c);
                        }
                    }
                    self.acc(p, dp);
                    offset += w;
                }
            }
            Op::SumAll(a) => {
                let g = gout.item();
                let shape = self.value(a).shape();
                self.acc(a, Tensor::from_vec(shape.0, shape.1, vec![g; shape.0 * shape.1]));
            }
            Op::MeanAll(a) => {
                let shape = self.value(a).shape();
                let n = (shape.0 * shape.1) as f32;
                let g = gout.item() / n;
                self.acc(a, Tensor::from_vec(shape.0, shape.1, vec![g; shape.0 * shape.1]));
            }
            Op::SumRows(a) => {
                let shape = self.value(a).shape();
                let mut da = Tensor::zeros(shape.0, shape.1);
                for r in 0..shape.0 {
                    for c in 0..shape.1 {
                        *da.at_mut(r, c) = gout.data[c];
                    }
                }
                self.acc(a, da);
            }
            Op::SumCols(a) => {
                let shape = self.value(a).shape();
                let mut da = Tensor::zeros(shape.0, shape.1);
                for r in 0..shape.0 {
                    for c in 0..shape.1 {
                        *da.at_mut(r, c) = gout.data[r];
                    }
                }
                self.acc(a, da);
            }
            Op::Gather(a, r, c) => {
                let shape = self.value(a).shape();
                let mut da = Tensor::zeros(shape.0, shape.1);
                *da.at_mut(r, c) = gout.item();
                self.acc(a, da);
            }
        }
    }
}
