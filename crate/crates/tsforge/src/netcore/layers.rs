//! Reusable layers: dense projections, affine layer norm, feed-forward
//! blocks and masked multi-head attention.

use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, NodeId};
use super::store::ParameterStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Additive surrogate for -inf in attention logits. Large enough to push
/// masked weights below 1e-12 after softmax while staying finite.
pub const NEG_INF: f64 = -1e9;

/// T_q x T_k additive attention mask with entries in {0, NEG_INF}.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl AttentionMask {
    /// Build from an allow-predicate; errors if any query row keeps no keys.
    pub fn from_allowed(rows: usize, cols: usize, allowed: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mut data = vec![NEG_INF; rows * cols];
        for i in 0..rows {
            let mut any = false;
            for j in 0..cols {
                if allowed(i, j) {
                    data[i * cols + j] = 0.0;
                    any = true;
                }
            }
            if !any {
                return Err(Error::InvalidArgument(format!(
                    "attention mask row {i} keeps no visible positions"
                )));
            }
        }
        Ok(AttentionMask { rows, cols, data })
    }

    pub fn all_visible(rows: usize, cols: usize) -> Self {
        AttentionMask {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_visible(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j] == 0.0
    }

    /// Keep only positions visible in both masks; errors if a row ends up
    /// fully masked.
    pub fn intersect(&self, other: &AttentionMask) -> Result<AttentionMask> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape("mask intersection with differing shapes".into()));
        }
        AttentionMask::from_allowed(self.rows, self.cols, |i, j| {
            self.is_visible(i, j) && other.is_visible(i, j)
        })
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.rows, self.cols], self.data.clone()).unwrap()
    }
}

/// Linear projection with bias.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: String,
    pub b: String,
    fan_in: usize,
    fan_out: usize,
}

impl Dense {
    pub fn init(
        store: &mut ParameterStore,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = format!("{prefix}.w");
        let b = format!("{prefix}.b");
        store.insert_dense(&w, fan_in, fan_out, rng);
        store.insert_zeros(&b, vec![fan_out]);
        Dense {
            w,
            b,
            fan_in,
            fan_out,
        }
    }

    /// Apply to `(N, fan_in)` or `(B, T, fan_in)` inputs.
    pub fn forward(&self, g: &mut Graph, store: &ParameterStore, x: NodeId) -> Result<NodeId> {
        let w = g.param(store, &self.w)?;
        let b = g.param(store, &self.b)?;
        let shape = g.value(x).shape().to_vec();
        let y = match shape.len() {
            2 => g.matmul(x, w)?,
            3 => {
                let (bs, t, d) = (shape[0], shape[1], shape[2]);
                if d != self.fan_in {
                    return Err(Error::Shape(format!(
                        "dense expects last dim {}, got {d}",
                        self.fan_in
                    )));
                }
                let flat = g.reshape(x, vec![bs * t, d])?;
                let y = g.matmul(flat, w)?;
                g.reshape(y, vec![bs, t, self.fan_out])?
            }
            _ => return Err(Error::Shape("dense input must be rank 2 or 3".into())),
        };
        g.broadcast_add(y, b)
    }
}

/// Layer normalization with learned gain and shift over the last axis.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: String,
    pub beta: String,
}

impl LayerNorm {
    pub fn init(store: &mut ParameterStore, prefix: &str, width: usize) -> Self {
        let gamma = format!("{prefix}.gamma");
        let beta = format!("{prefix}.beta");
        store.insert(&gamma, Tensor::new(vec![width], vec![1.0; width]).unwrap());
        store.insert_zeros(&beta, vec![width]);
        LayerNorm { gamma, beta }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParameterStore, x: NodeId) -> Result<NodeId> {
        let gamma = g.param(store, &self.gamma)?;
        let beta = g.param(store, &self.beta)?;
        let n = g.layer_norm(x)?;
        let scaled = g.broadcast_mul(n, gamma)?;
        g.broadcast_add(scaled, beta)
    }
}

/// Two-layer position-wise feed-forward with ReLU.
#[derive(Debug, Clone)]
pub struct FeedForward {
    lin1: Dense,
    lin2: Dense,
}

impl FeedForward {
    pub fn init(
        store: &mut ParameterStore,
        prefix: &str,
        width: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        FeedForward {
            lin1: Dense::init(store, &format!("{prefix}.lin1"), width, hidden, rng),
            lin2: Dense::init(store, &format!("{prefix}.lin2"), hidden, width, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParameterStore, x: NodeId) -> Result<NodeId> {
        let h = self.lin1.forward(g, store, x)?;
        let h = g.relu(h);
        self.lin2.forward(g, store, h)
    }
}

/// Multi-head scaled dot-product attention with an additive mask applied
/// before the softmax. Heads are slices of the projected width.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    wq: Dense,
    wk: Dense,
    wv: Dense,
    wo: Dense,
    pub heads: usize,
    pub width: usize,
}

impl MultiHeadAttention {
    pub fn init(
        store: &mut ParameterStore,
        prefix: &str,
        width: usize,
        heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if heads == 0 || width % heads != 0 {
            return Err(Error::Config(format!(
                "model width {width} not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            wq: Dense::init(store, &format!("{prefix}.wq"), width, width, rng),
            wk: Dense::init(store, &format!("{prefix}.wk"), width, width, rng),
            wv: Dense::init(store, &format!("{prefix}.wv"), width, width, rng),
            wo: Dense::init(store, &format!("{prefix}.wo"), width, width, rng),
            heads,
            width,
        })
    }

    /// `q_in (B,Tq,W)`, `k_in`/`v_in (B,Tk,W)`, mask `(Tq,Tk)`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        q_in: NodeId,
        k_in: NodeId,
        v_in: NodeId,
        mask: &AttentionMask,
    ) -> Result<NodeId> {
        let (_, tq, _) = g.value(q_in).dims3()?;
        let (_, tk, _) = g.value(k_in).dims3()?;
        if mask.rows() != tq || mask.cols() != tk {
            return Err(Error::Shape(format!(
                "mask {}x{} against sequence {tq}x{tk}",
                mask.rows(),
                mask.cols()
            )));
        }
        let head_dim = self.width / self.heads;
        let q = self.wq.forward(g, store, q_in)?;
        let k = self.wk.forward(g, store, k_in)?;
        let v = self.wv.forward(g, store, v_in)?;
        let mask_node = g.input(mask.to_tensor());
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut head_outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let off = h * head_dim;
            let qh = g.slice_last(q, off, head_dim)?;
            let kh = g.slice_last(k, off, head_dim)?;
            let vh = g.slice_last(v, off, head_dim)?;
            let kt = g.transpose_last2(kh)?;
            let scores = g.bmm(qh, kt)?;
            let scores = g.scale(scores, scale);
            let masked = g.broadcast_add(scores, mask_node)?;
            let attn = g.softmax_rows(masked)?;
            head_outputs.push(g.bmm(attn, vh)?);
        }
        let cat = g.concat_last(&head_outputs)?;
        self.wo.forward(g, store, cat)
    }
}
