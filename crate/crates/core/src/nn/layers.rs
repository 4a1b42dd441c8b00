//! Layers with hand-written backward passes.
//!
//! Every layer keeps only [`ParamId`]s; values and gradient accumulators live
//! in a [`ParameterStore`]. `forward` reads the store and returns whatever
//! the matching `backward` needs, and `backward` adds parameter gradients
//! into the store and returns the gradient with respect to its input.

use std::str::FromStr;

use rand::Rng;

use super::params::{normal, xavier_uniform, ParamId, ParameterStore};
use super::tensor::Tensor2D;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn forward(self, x: &Tensor2D) -> Tensor2D {
        match self {
            Activation::Relu => x.map(|v| v.max(0.0)),
            Activation::Tanh => x.map(f64::tanh),
        }
    }

    /// Gradient through the activation, given its pre-activation input.
    pub fn backward(self, x: &Tensor2D, dy: &Tensor2D) -> Tensor2D {
        let mut dx = dy.clone();
        for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
            *d *= match self {
                Activation::Relu => {
                    if v > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Activation::Tanh => 1.0 - v.tanh().powi(2),
            };
        }
        dx
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation `{}`", other))),
        }
    }
}

/// `y = x W + b`
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    /// Xavier-uniform weights, zero bias.
    pub fn new<R: Rng>(ps: &mut ParameterStore, name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let w = ps.add(format!("{}.w", name), xavier_uniform(inputs, outputs, rng));
        let b = ps.add(format!("{}.b", name), Tensor2D::zeros(1, outputs));
        Linear { w, b }
    }

    /// Weights drawn from N(0, std^2) instead of Xavier.
    pub fn new_normal<R: Rng>(
        ps: &mut ParameterStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let w = ps.add(format!("{}.w", name), normal(inputs, outputs, std, rng));
        let b = ps.add(format!("{}.b", name), Tensor2D::zeros(1, outputs));
        Linear { w, b }
    }

    pub fn forward(&self, ps: &ParameterStore, x: &Tensor2D) -> Tensor2D {
        let mut y = x.matmul(ps.value(self.w));
        let b = ps.value(self.b).row(0);
        for r in 0..y.rows() {
            for (v, bias) in y.row_mut(r).iter_mut().zip(b) {
                *v += bias;
            }
        }
        y
    }

    pub fn backward(&self, ps: &mut ParameterStore, x: &Tensor2D, dy: &Tensor2D) -> Tensor2D {
        x.matmul_tn_into(dy, ps.grad_mut(self.w));
        let db = ps.grad_mut(self.b);
        for r in 0..dy.rows() {
            for (g, d) in db.row_mut(0).iter_mut().zip(dy.row(r)) {
                *g += d;
            }
        }
        dy.matmul_nt(ps.value(self.w))
    }
}

/// Row lookup into a table.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
}

impl Embedding {
    /// Table initialized from N(0, 0.02^2).
    pub fn new<R: Rng>(ps: &mut ParameterStore, name: &str, rows: usize, dim: usize, rng: &mut R) -> Self {
        Embedding {
            table: ps.add(name.to_owned(), normal(rows, dim, 0.02, rng)),
        }
    }

    pub fn forward(&self, ps: &ParameterStore, ids: &[usize]) -> Tensor2D {
        embedding_lookup(ps.value(self.table), ids)
    }

    pub fn backward(&self, ps: &mut ParameterStore, ids: &[usize], dy: &Tensor2D) {
        let g = ps.grad_mut(self.table);
        for (r, &id) in ids.iter().enumerate() {
            for (a, b) in g.row_mut(id).iter_mut().zip(dy.row(r)) {
                *a += b;
            }
        }
    }
}

/// Output row `r` is `table` row `ids[r]`.
pub fn embedding_lookup(table: &Tensor2D, ids: &[usize]) -> Tensor2D {
    for &id in ids {
        assert!(id < table.rows(), "embedding id {} out of range {}", id, table.rows());
    }
    table.gather_rows(ids)
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

#[derive(Clone, Debug)]
pub struct LayerNormCache {
    /// Normalized input before scale and shift.
    pub xhat: Tensor2D,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(ps: &mut ParameterStore, name: &str, dim: usize) -> Self {
        let gamma = ps.add(format!("{}.gamma", name), Tensor2D::from_vec(1, dim, vec![1.0; dim]));
        let beta = ps.add(format!("{}.beta", name), Tensor2D::zeros(1, dim));
        LayerNorm { gamma, beta }
    }

    pub fn forward(&self, ps: &ParameterStore, x: &Tensor2D) -> (Tensor2D, LayerNormCache) {
        let d = x.cols() as f64;
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = xhat.row_mut(r);
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std.push(is);
        }
        let gamma = ps.value(self.gamma).row(0);
        let beta = ps.value(self.beta).row(0);
        let mut y = xhat.clone();
        for r in 0..y.rows() {
            for ((v, g), b) in y.row_mut(r).iter_mut().zip(gamma).zip(beta) {
                *v = *v * g + b;
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, ps: &mut ParameterStore, cache: &LayerNormCache, dy: &Tensor2D) -> Tensor2D {
        let cols = dy.cols();
        let d = cols as f64;
        {
            let dg = ps.grad_mut(self.gamma);
            for r in 0..dy.rows() {
                for c in 0..cols {
                    dg[(0, c)] += dy[(r, c)] * cache.xhat[(r, c)];
                }
            }
            let db = ps.grad_mut(self.beta);
            for r in 0..dy.rows() {
                for (g, v) in db.row_mut(0).iter_mut().zip(dy.row(r)) {
                    *g += v;
                }
            }
        }
        let gamma = ps.value(self.gamma).row(0).to_vec();
        let mut dx = Tensor2D::zeros(dy.rows(), cols);
        for r in 0..dy.rows() {
            let xh = cache.xhat.row(r);
            let dxh: Vec<f64> = dy.row(r).iter().zip(&gamma).map(|(a, g)| a * g).collect();
            let sum: f64 = dxh.iter().sum();
            let dot: f64 = dxh.iter().zip(xh).map(|(a, b)| a * b).sum();
            let scale = cache.inv_std[r] / d;
            for (c, out) in dx.row_mut(r).iter_mut().enumerate() {
                *out = scale * (d * dxh[c] - sum - xh[c] * dot);
            }
        }
        dx
    }
}

/// How a stacked batch matrix splits into padded sequences: row
/// `b * len + t` is position `t` of sequence `b`; positions at or beyond
/// `valid[b]` are padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeqLayout {
    pub len: usize,
    pub valid: Vec<usize>,
}

impl SeqLayout {
    pub fn new(len: usize, valid: Vec<usize>) -> Self {
        assert!(valid.iter().all(|&v| v >= 1 && v <= len), "valid lengths must be in 1..=len");
        SeqLayout { len, valid }
    }

    /// One unpadded sequence.
    pub fn single(len: usize) -> Self {
        SeqLayout::new(len, vec![len])
    }

    pub fn batch(&self) -> usize {
        self.valid.len()
    }

    pub fn rows(&self) -> usize {
        self.len * self.valid.len()
    }
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    x: Tensor2D,
    q: Tensor2D,
    k: Tensor2D,
    v: Tensor2D,
    /// Attention weights, one `len x len` matrix per (sequence, head).
    pub probs: Vec<Tensor2D>,
    concat: Tensor2D,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(ps: &mut ParameterStore, name: &str, dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!(
                "model width {} is not divisible by {} attention heads",
                dim, heads
            )));
        }
        Ok(MultiHeadAttention {
            query: Linear::new(ps, &format!("{}.q", name), dim, dim, rng),
            key: Linear::new(ps, &format!("{}.k", name), dim, dim, rng),
            value: Linear::new(ps, &format!("{}.v", name), dim, dim, rng),
            output: Linear::new(ps, &format!("{}.o", name), dim, dim, rng),
            heads,
            dim,
        })
    }

    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn forward(&self, ps: &ParameterStore, x: &Tensor2D, layout: &SeqLayout) -> (Tensor2D, AttentionCache) {
        assert_eq!(x.rows(), layout.rows(), "input rows do not match layout");
        let q = self.query.forward(ps, x);
        let k = self.key.forward(ps, x);
        let v = self.value.forward(ps, x);
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let len = layout.len;
        let mut concat = Tensor2D::zeros(x.rows(), self.dim);
        let mut probs = Vec::with_capacity(layout.batch() * self.heads);
        for (b, &valid) in layout.valid.iter().enumerate() {
            let base = b * len;
            for h in 0..self.heads {
                let off = h * dh;
                let mut p = Tensor2D::zeros(len, len);
                for i in 0..len {
                    let qi = &q.row(base + i)[off..off + dh];
                    let row = p.row_mut(i);
                    let mut max = f64::NEG_INFINITY;
                    for (j, s) in row.iter_mut().enumerate().take(valid) {
                        let kj = &k.row(base + j)[off..off + dh];
                        *s = scale * qi.iter().zip(kj).map(|(a, c)| a * c).sum::<f64>();
                        max = max.max(*s);
                    }
                    let mut z = 0.0;
                    for s in row.iter_mut().take(valid) {
                        *s = (*s - max).exp();
                        z += *s;
                    }
                    for s in row.iter_mut().take(valid) {
                        *s /= z;
                    }
                    let out = &mut concat.row_mut(base + i)[off..off + dh];
                    for j in 0..valid {
                        let pij = p[(i, j)];
                        let vj = &v.row(base + j)[off..off + dh];
                        for (o, val) in out.iter_mut().zip(vj) {
                            *o += pij * val;
                        }
                    }
                }
                probs.push(p);
            }
        }
        let y = self.output.forward(ps, &concat);
        (
            y,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                probs,
                concat,
            },
        )
    }

    pub fn backward(&self, ps: &mut ParameterStore, cache: &AttentionCache, layout: &SeqLayout, dy: &Tensor2D) -> Tensor2D {
        let dconcat = self.output.backward(ps, &cache.concat, dy);
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let len = layout.len;
        let rows = cache.x.rows();
        let mut dq = Tensor2D::zeros(rows, self.dim);
        let mut dk = Tensor2D::zeros(rows, self.dim);
        let mut dv = Tensor2D::zeros(rows, self.dim);
        for (b, &valid) in layout.valid.iter().enumerate() {
            let base = b * len;
            for h in 0..self.heads {
                let off = h * dh;
                let p = &cache.probs[b * self.heads + h];
                for i in 0..len {
                    let doi = &dconcat.row(base + i)[off..off + dh];
                    // dP_ij = dO_i . v_j ; dV_j += P_ij dO_i
                    let mut dp = vec![0.0; valid];
                    for (j, dpj) in dp.iter_mut().enumerate() {
                        let vj = &cache.v.row(base + j)[off..off + dh];
                        *dpj = doi.iter().zip(vj).map(|(a, c)| a * c).sum();
                        let pij = p[(i, j)];
                        let dvj = &mut dv.row_mut(base + j)[off..off + dh];
                        for (g, d) in dvj.iter_mut().zip(doi) {
                            *g += pij * d;
                        }
                    }
                    let inner: f64 = dp.iter().enumerate().map(|(j, d)| d * p[(i, j)]).sum();
                    for (j, dpj) in dp.iter().enumerate() {
                        let ds = p[(i, j)] * (dpj - inner) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let kj = &cache.k.row(base + j)[off..off + dh];
                        let qi = &cache.q.row(base + i)[off..off + dh];
                        for (g, kv) in dq.row_mut(base + i)[off..off + dh].iter_mut().zip(kj) {
                            *g += ds * kv;
                        }
                        for (g, qv) in dk.row_mut(base + j)[off..off + dh].iter_mut().zip(qi) {
                            *g += ds * qv;
                        }
                    }
                }
            }
        }
        let mut dx = self.query.backward(ps, &cache.x, &dq);
        dx.add_assign(&self.key.backward(ps, &cache.x, &dk));
        dx.add_assign(&self.value.backward(ps, &cache.x, &dv));
        dx
    }
}

/// Post-norm encoder layer: attention, residual, layer norm, position-wise
/// feed-forward, residual, layer norm.
#[derive(Clone, Debug)]
pub struct TransformerLayer {
    pub attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub norm2: LayerNorm,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct TransformerCache {
    pub attention: AttentionCache,
    norm1: LayerNormCache,
    hidden: Tensor2D,
    ff_pre: Tensor2D,
    ff_act: Tensor2D,
    norm2: LayerNormCache,
}

impl TransformerLayer {
    pub fn new<R: Rng>(
        ps: &mut ParameterStore,
        name: &str,
        dim: usize,
        heads: usize,
        ff_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(TransformerLayer {
            attention: MultiHeadAttention::new(ps, &format!("{}.attn", name), dim, heads, rng)?,
            norm1: LayerNorm::new(ps, &format!("{}.ln1", name), dim),
            ff_in: Linear::new(ps, &format!("{}.ff1", name), dim, ff_dim, rng),
            ff_out: Linear::new(ps, &format!("{}.ff2", name), ff_dim, dim, rng),
            norm2: LayerNorm::new(ps, &format!("{}.ln2", name), dim),
            activation,
        })
    }

    pub fn forward(&self, ps: &ParameterStore, x: &Tensor2D, layout: &SeqLayout) -> (Tensor2D, TransformerCache) {
        let (a, attention) = self.attention.forward(ps, x, layout);
        let (hidden, norm1) = self.norm1.forward(ps, &x.add(&a));
        let ff_pre = self.ff_in.forward(ps, &hidden);
        let ff_act = self.activation.forward(&ff_pre);
        let f = self.ff_out.forward(ps, &ff_act);
        let (y, norm2) = self.norm2.forward(ps, &hidden.add(&f));
        (
            y,
            TransformerCache {
                attention,
                norm1,
                hidden,
                ff_pre,
                ff_act,
                norm2,
            },
        )
    }

    pub fn backward(&self, ps: &mut ParameterStore, cache: &TransformerCache, layout: &SeqLayout, dy: &Tensor2D) -> Tensor2D {
        let dr2 = self.norm2.backward(ps, &cache.norm2, dy);
        let dact = self.ff_out.backward(ps, &cache.ff_act, &dr2);
        let dpre = self.activation.backward(&cache.ff_pre, &dact);
        let mut dhidden = self.ff_in.backward(ps, &cache.hidden, &dpre);
        dhidden.add_assign(&dr2);
        let dr1 = self.norm1.backward(ps, &cache.norm1, &dhidden);
        let mut dx = self.attention.backward(ps, &cache.attention, layout, &dr1);
        dx.add_assign(&dr1);
        dx
    }
}

/// Feed-forward regressor: hidden layers with an activation, then a linear
/// projection to one output.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    inputs: Vec<Tensor2D>,
    pre: Vec<Tensor2D>,
}

impl Mlp {
    pub fn new<R: Rng>(
        ps: &mut ParameterStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        hidden_layers: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden_layers + 1);
        let mut width = inputs;
        for i in 0..hidden_layers {
            layers.push(Linear::new(ps, &format!("{}.{}", name, i), width, hidden, rng));
            width = hidden;
        }
        layers.push(Linear::new(ps, &format!("{}.out", name), width, 1, rng));
        Mlp { layers, activation }
    }

    /// One prediction per input row.
    pub fn forward(&self, ps: &ParameterStore, x: &Tensor2D) -> (Vec<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(ps, &h);
            inputs.push(h);
            if i + 1 == self.layers.len() {
                return (z.into_vec(), MlpCache { inputs, pre });
            }
            h = self.activation.forward(&z);
            pre.push(z);
        }
        unreachable!("an MLP has at least one layer")
    }

    pub fn backward(&self, ps: &mut ParameterStore, cache: &MlpCache, dpred: &[f64]) -> Tensor2D {
        let mut d = Tensor2D::from_vec(dpred.len(), 1, dpred.to_vec());
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                d = self.activation.backward(&cache.pre[i], &d);
            }
            d = self.layers[i].backward(ps, &cache.inputs[i], &d);
        }
        d
    }
}
