//! The designer network: a 3-block self-attention encoder shared by the
//! factored actor heads, the value head, and the inverse-dynamics action
//! predictor (an actor-head clone with doubled input width).

use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;
use bridge_sim::{EncodedObs, OBS_FEATURES, POSE_BINS};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub hidden: usize,
    pub n_heads: usize,
    pub ffn: usize,
    pub n_layers: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { hidden: 64, n_heads: 4, ffn: 128, n_layers: 3 }
    }
}

/// All learnable tensors, keyed by a stable dotted name. Iteration order is
/// the BTreeMap order, which keeps the optimizer and checkpoints
/// deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub cfg: NetConfig,
    pub tensors: BTreeMap<String, Tensor>,
}

/// Gaussian sample via Box-Muller.
fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Orthogonal initialization: Gram-Schmidt over the smaller dimension of a
/// Gaussian matrix, scaled by `gain`.
fn orthogonal<R: Rng>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Tensor {
    let transpose = rows < cols;
    let (r, c) = if transpose { (cols, rows) } else { (rows, cols) };
    // r >= c: orthonormalize the c columns.
    let mut m = vec![vec![0.0f64; c]; r];
    for row in m.iter_mut() {
        for v in row.iter_mut() {
            *v = normal(rng);
        }
    }
    for j in 0..c {
        for k in 0..j {
            let dot: f64 = (0..r).map(|i| m[i][j] * m[i][k]).sum();
            for i in 0..r {
                m[i][j] -= dot * m[i][k];
            }
        }
        let norm: f64 = (0..r).map(|i| m[i][j] * m[i][j]).sum::<f64>().sqrt().max(1e-12);
        for i in 0..r {
            m[i][j] /= norm;
        }
    }
    let mut out = Tensor::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let v = if transpose { m[j][i] } else { m[i][j] };
            *out.at_mut(i, j) = (gain * v) as f32;
        }
    }
    out
}

const HEAD_GAIN: f64 = 0.01;

impl Params {
    pub fn init<R: Rng>(cfg: NetConfig, rng: &mut R) -> Self {
        let d = cfg.hidden;
        let mut t = BTreeMap::new();
        let linear = |t: &mut BTreeMap<String, Tensor>,
                          name: &str,
                          rows: usize,
                          cols: usize,
                          gain: f64,
                          rng: &mut R| {
            t.insert(format!("{name}.w"), orthogonal(rows, cols, gain, rng));
            t.insert(format!("{name}.b"), Tensor::zeros(1, cols));
        };
        let ln = |t: &mut BTreeMap<String, Tensor>, name: &str| {
            t.insert(format!("{name}.g"), Tensor::from_vec(1, d, vec![1.0; d]));
            t.insert(format!("{name}.b"), Tensor::zeros(1, d));
        };

        linear(&mut t, "embed", OBS_FEATURES, d, 1.0, rng);
        for l in 0..cfg.n_layers {
            ln(&mut t, &format!("enc{l}.ln1"));
            for part in ["wq", "wk", "wv", "wo"] {
                linear(&mut t, &format!("enc{l}.attn.{part}"), d, d, 1.0, rng);
            }
            ln(&mut t, &format!("enc{l}.ln2"));
            linear(&mut t, &format!("enc{l}.ffn.l1"), d, cfg.ffn, 1.0, rng);
            linear(&mut t, &format!("enc{l}.ffn.l2"), cfg.ffn, d, 1.0, rng);
        }
        ln(&mut t, "enc.lnf");

        linear(&mut t, "actor.noop", d, 1, HEAD_GAIN, rng);
        linear(&mut t, "actor.id", d, 1, HEAD_GAIN, rng);
        for head in ["y", "z", "angle"] {
            linear(&mut t, &format!("actor.{head}"), d, POSE_BINS, HEAD_GAIN, rng);
        }
        linear(&mut t, "critic.l1", d, d, 1.0, rng);
        linear(&mut t, "critic.l2", d, 1, 1.0, rng);

        linear(&mut t, "aux.noop", 2 * d, 1, HEAD_GAIN, rng);
        linear(&mut t, "aux.id", 2 * d, 1, HEAD_GAIN, rng);
        for head in ["y", "z", "angle"] {
            linear(&mut t, &format!("aux.{head}"), 2 * d, POSE_BINS, HEAD_GAIN, rng);
        }
        Params { cfg, tensors: t }
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }
}

/// Binds parameters into a graph, one node per parameter per graph.
/// `trainable = false` binds constants, for old-policy or evaluation passes.
pub struct Binder<'p> {
    pub params: &'p Params,
    trainable: bool,
    bound: HashMap<String, NodeId>,
}

impl<'p> Binder<'p> {
    pub fn new(params: &'p Params, trainable: bool) -> Self {
        Binder { params, trainable, bound: HashMap::new() }
    }

    pub fn get(&mut self, g: &mut Graph, name: &str) -> NodeId {
        if let Some(id) = self.bound.get(name) {
            return *id;
        }
        let t = self.params.get(name).clone();
        let id = if self.trainable { g.leaf(t) } else { g.constant(t) };
        self.bound.insert(name.to_string(), id);
        id
    }

    /// Pull accumulated gradients out of the graph, keyed by parameter name.
    pub fn grads(&self, g: &mut Graph) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (name, id) in &self.bound {
            if let Some(grad) = g.take_grad(*id) {
                out.push((name.clone(), grad));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

fn linear(g: &mut Graph, b: &mut Binder, x: NodeId, name: &str) -> NodeId {
    let w = b.get(g, &format!("{name}.w"));
    let bias = b.get(g, &format!("{name}.b"));
    let xw = g.matmul(x, w);
    g.add_bias(xw, bias)
}

fn layer_norm(g: &mut Graph, b: &mut Binder, x: NodeId, name: &str) -> NodeId {
    let gain = b.get(g, &format!("{name}.g"));
    let bias = b.get(g, &format!("{name}.b"));
    g.layer_norm(x, gain, bias)
}

pub fn obs_tensor(obs: &EncodedObs) -> Tensor {
    let rows = obs.tokens.len();
    let mut data = Vec::with_capacity(rows * OBS_FEATURES);
    for t in &obs.tokens {
        data.extend_from_slice(t);
    }
    Tensor::from_vec(rows, OBS_FEATURES, data)
}

/// Encoder forward: token features `[T, F]` to contextual features `[T, d]`.
/// Pre-layer-norm attention blocks with a final layer norm; no positional
/// encodings, so the block tokens stay permutation-equivariant.
pub fn encode(g: &mut Graph, b: &mut Binder, obs: &EncodedObs) -> NodeId {
    let cfg = b.params.cfg;
    let d = cfg.hidden;
    let head_dim = d / cfg.n_heads;
    let x = g.constant(obs_tensor(obs));
    let mut h = linear(g, b, x, "embed");
    for l in 0..cfg.n_layers {
        let a = layer_norm(g, b, h, &format!("enc{l}.ln1"));
        let q = linear(g, b, a, &format!("enc{l}.attn.wq"));
        let k = linear(g, b, a, &format!("enc{l}.attn.wk"));
        let v = linear(g, b, a, &format!("enc{l}.attn.wv"));
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for hd in 0..cfg.n_heads {
            let qh = g.slice_cols(q, hd * head_dim, head_dim);
            let kh = g.slice_cols(k, hd * head_dim, head_dim);
            let vh = g.slice_cols(v, hd * head_dim, head_dim);
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt);
            let scaled = g.scale(scores, 1.0 / (head_dim as f32).sqrt());
            let attn = g.softmax_rows(scaled);
            heads.push(g.matmul(attn, vh));
        }
        let cat = g.concat_cols(&heads);
        let o = linear(g, b, cat, &format!("enc{l}.attn.wo"));
        h = g.add(h, o);

        let n = layer_norm(g, b, h, &format!("enc{l}.ln2"));
        let f1 = linear(g, b, n, &format!("enc{l}.ffn.l1"));
        let f1a = g.relu(f1);
        let f2 = linear(g, b, f1a, &format!("enc{l}.ffn.l2"));
        h = g.add(h, f2);
    }
    layer_norm(g, b, h, "enc.lnf")
}

/// Factored policy logits built from encoder features.
pub struct PolicyNodes {
    /// `[1, N+1]`: no-op class then one logit per block token.
    pub id_logits: NodeId,
    /// `[N, 64]` per pose dimension, row i conditioning on ID = i + 1.
    pub y_logits: NodeId,
    pub z_logits: NodeId,
    pub angle_logits: NodeId,
}

fn heads(
    g: &mut Graph,
    b: &mut Binder,
    h: NodeId,
    n_blocks: usize,
    prefix: &str,
) -> PolicyNodes {
    let n_tokens = g.value(h).rows;
    debug_assert_eq!(n_tokens, n_blocks + 2);
    // The no-op logit pools every token, scaled by 1/N.
    let summed = g.sum_rows(h);
    let pooled = g.scale(summed, 1.0 / n_blocks as f32);
    let noop = linear(g, b, pooled, &format!("{prefix}.noop"));
    let blocks = g.slice_rows(h, 0, n_blocks);
    let id_col = linear(g, b, blocks, &format!("{prefix}.id"));
    let id_row = g.transpose(id_col);
    let id_logits = g.concat_cols(&[noop, id_row]);
    PolicyNodes {
        id_logits,
        y_logits: linear(g, b, blocks, &format!("{prefix}.y")),
        z_logits: linear(g, b, blocks, &format!("{prefix}.z")),
        angle_logits: linear(g, b, blocks, &format!("{prefix}.angle")),
    }
}

pub fn policy_heads(g: &mut Graph, b: &mut Binder, h: NodeId, n_blocks: usize) -> PolicyNodes {
    heads(g, b, h, n_blocks, "actor")
}

/// Critic: 2-layer MLP over the sum-pooled token features.
pub fn value_head(g: &mut Graph, b: &mut Binder, h: NodeId) -> NodeId {
    let pooled = g.sum_rows(h);
    let l1 = linear(g, b, pooled, "critic.l1");
    let l1a = g.relu(l1);
    linear(g, b, l1a, "critic.l2")
}

/// Inverse-dynamics predictor: concatenate the two frames' features along the
/// hidden dimension and run the doubled-width actor-head clone.
pub fn aux_heads(
    g: &mut Graph,
    b: &mut Binder,
    h_t: NodeId,
    h_t1: NodeId,
    n_blocks: usize,
) -> PolicyNodes {
    assert_eq!(g.value(h_t).rows, g.value(h_t1).rows, "frame token counts differ");
    let cat = g.concat_cols(&[h_t, h_t1]);
    heads(g, b, cat, n_blocks, "aux")
}

/// Adaptive moment estimation over the parameter map.
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    t: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(lr: f32) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    pub fn step(&mut self, params: &mut Params, grads: &[(String, Tensor)]) {
        self.t += 1;
        let bc1 = 1.0 - (self.beta1 as f64).powi(self.t as i32);
        let bc2 = 1.0 - (self.beta2 as f64).powi(self.t as i32);
        for (name, grad) in grads {
            let p = params
                .tensors
                .get_mut(name)
                .unwrap_or_else(|| panic!("gradient for unknown parameter {name}"));
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.rows, grad.cols));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.rows, grad.cols));
            for i in 0..grad.data.len() {
                let gi = grad.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m.data[i] as f64 / bc1;
                let vhat = v.data[i] as f64 / bc2;
                p.data[i] -= (self.lr as f64 * mhat / (vhat.sqrt() + self.eps as f64)) as f32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_init_has_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = orthogonal(64, 16, 1.0, &mut rng);
        for j in 0..16 {
            for k in j..16 {
                let dot: f64 = (0..64).map(|i| t.at(i, j) as f64 * t.at(i, k) as f64).sum();
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-5, "col {j} . col {k} = {dot}");
            }
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let cfg = NetConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = Params::init(cfg, &mut rng);
        let mut adam = Adam::new(0.05);
        // Treat embed.b as the variable of f(x) = |x - 1|^2 / 2.
        for _ in 0..500 {
            let x = params.get("embed.b").clone();
            let grad = x.map(|v| v - 1.0);
            adam.step(&mut params, &[("embed.b".to_string(), grad)]);
        }
        for v in &params.get("embed.b").data {
            assert!((v - 1.0).abs() < 1e-2);
        }
    }
}
