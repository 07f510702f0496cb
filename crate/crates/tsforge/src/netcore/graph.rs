//! Recorded-operation tape with reverse-mode gradients.
//!
//! A `Graph` is built per forward pass: every op appends a node holding its
//! output value, and `backward` walks the tape in reverse, accumulating
//! gradients into a `ParameterStore` for the leaves bound to parameters.

use super::store::ParameterStore;
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Index of a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf { param: Option<String> },
    Detach,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    BroadcastAdd(usize, usize),
    BroadcastMul(usize, usize),
    Matmul(usize, usize),
    Bmm(usize, usize),
    TransposeLast2(usize),
    Reshape(usize),
    GatherRows(usize, Vec<usize>),
    Sigmoid(usize),
    Relu(usize),
    LayerNorm(usize),
    SoftmaxRows(usize),
    MeanAll(usize),
    SumAll(usize),
    MeanLast(usize),
    ConcatLast(Vec<usize>),
    SliceLast(usize, usize, usize),
    CrossEntropyLogits(usize, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Computation tape. One instance per forward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    ran_backward: bool,
}

const LN_EPS: f64 = 1e-5;

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            ran_backward: false,
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` loss w.r.t. a leaf node.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Constant input; receives a gradient but does not train.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf { param: None })
    }

    /// Leaf bound to a named parameter; `backward` accumulates into the store.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<NodeId> {
        let value = store.value(name)?.clone();
        Ok(self.push(
            value,
            Op::Leaf {
                param: Some(name.to_string()),
            },
        ))
    }

    /// Copy a node's value as a fresh constant; blocks gradient flow.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.clone();
        self.push(value, Op::Detach)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.zip(&self.nodes[b.0].value, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.zip(&self.nodes[b.0].value, |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.zip(&self.nodes[b.0].value, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a.0, b.0)))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x * c);
        self.push(v, Op::Scale(a.0, c))
    }

    /// `a + b` with `b` broadcast to `a`'s shape (right-aligned, 1s allowed).
    pub fn broadcast_add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let target = self.nodes[a.0].value.shape().to_vec();
        let bb = self.nodes[b.0].value.broadcast_to(&target)?;
        let v = self.nodes[a.0].value.zip(&bb, |x, y| x + y)?;
        Ok(self.push(v, Op::BroadcastAdd(a.0, b.0)))
    }

    /// `a * b` with `b` broadcast to `a`'s shape.
    pub fn broadcast_mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let target = self.nodes[a.0].value.shape().to_vec();
        let bb = self.nodes[b.0].value.broadcast_to(&target)?;
        let v = self.nodes[a.0].value.zip(&bb, |x, y| x * y)?;
        Ok(self.push(v, Op::BroadcastMul(a.0, b.0)))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        Ok(self.push(v, Op::Matmul(a.0, b.0)))
    }

    pub fn bmm(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.bmm(&self.nodes[b.0].value)?;
        Ok(self.push(v, Op::Bmm(a.0, b.0)))
    }

    pub fn transpose_last2(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.transpose_last2()?;
        Ok(self.push(v, Op::TransposeLast2(a.0)))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let v = self.nodes[a.0].value.reshaped(shape)?;
        Ok(self.push(v, Op::Reshape(a.0)))
    }

    /// Select rows of a `(V, W)` table: output `(ids.len(), W)`.
    pub fn gather_rows(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let t = &self.nodes[table.0].value;
        let (v, w) = t.dims2()?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::InvalidArgument(format!(
                "gather index {bad} out of range for table with {v} rows"
            )));
        }
        let mut out = Tensor::zeros(vec![ids.len(), w]);
        for (r, &i) in ids.iter().enumerate() {
            out.data_mut()[r * w..(r + 1) * w].copy_from_slice(&t.data()[i * w..(i + 1) * w]);
        }
        Ok(self.push(out, Op::GatherRows(table.0, ids.to_vec())))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(sigmoid_scalar);
        self.push(v, Op::Sigmoid(a.0))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(v, Op::Relu(a.0))
    }

    /// Normalize the last axis to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, a: NodeId) -> Result<NodeId> {
        let x = &self.nodes[a.0].value;
        if x.rank() < 2 {
            return Err(Error::Shape("layer_norm needs rank >= 2".into()));
        }
        let d = *x.shape().last().unwrap();
        let mut out = Tensor::zeros(x.shape().to_vec());
        for (row_in, row_out) in x.data().chunks(d).zip(out.data_mut().chunks_mut(d)) {
            let (mean, inv) = row_stats(row_in);
            for (o, &v) in row_out.iter_mut().zip(row_in) {
                *o = (v - mean) * inv;
            }
        }
        Ok(self.push(out, Op::LayerNorm(a.0)))
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let x = &self.nodes[a.0].value;
        if x.rank() < 2 {
            return Err(Error::Shape("softmax_rows needs rank >= 2".into()));
        }
        let d = *x.shape().last().unwrap();
        let mut out = Tensor::zeros(x.shape().to_vec());
        for (row_in, row_out) in x.data().chunks(d).zip(out.data_mut().chunks_mut(d)) {
            let max = row_in.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (o, &v) in row_out.iter_mut().zip(row_in) {
                *o = (v - max).exp();
                sum += *o;
            }
            for o in row_out.iter_mut() {
                *o /= sum;
            }
        }
        Ok(self.push(out, Op::SoftmaxRows(a.0)))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a.0].value;
        let v = x.data().iter().sum::<f64>() / x.numel() as f64;
        self.push(Tensor::scalar(v), Op::MeanAll(a.0))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.data().iter().sum::<f64>();
        self.push(Tensor::scalar(v), Op::SumAll(a.0))
    }

    /// Mean over the last axis, dropping it: `(..., D) -> (...)`.
    pub fn mean_last(&mut self, a: NodeId) -> Result<NodeId> {
        let x = &self.nodes[a.0].value;
        if x.rank() < 2 {
            return Err(Error::Shape("mean_last needs rank >= 2".into()));
        }
        let d = *x.shape().last().unwrap();
        let out_shape: Vec<usize> = x.shape()[..x.rank() - 1].to_vec();
        let mut out = Tensor::zeros(out_shape);
        for (i, chunk) in x.data().chunks(d).enumerate() {
            out.data_mut()[i] = chunk.iter().sum::<f64>() / d as f64;
        }
        Ok(self.push(out, Op::MeanLast(a.0)))
    }

    /// Concatenate along the last axis; all parts share leading dims.
    pub fn concat_last(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat_last of zero parts".into()));
        }
        let first = self.nodes[parts[0].0].value.shape().to_vec();
        let lead = &first[..first.len() - 1];
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let s = self.nodes[p.0].value.shape();
            if &s[..s.len() - 1] != lead {
                return Err(Error::Shape("concat_last leading dims differ".into()));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut shape = lead.to_vec();
        shape.push(total);
        let mut out = Tensor::zeros(shape);
        let mut off = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let src = self.nodes[p.0].value.data();
            for r in 0..rows {
                out.data_mut()[r * total + off..r * total + off + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            off += w;
        }
        Ok(self.push(out, Op::ConcatLast(parts.iter().map(|p| p.0).collect())))
    }

    /// Columns `[offset, offset+len)` of the last axis.
    pub fn slice_last(&mut self, a: NodeId, offset: usize, len: usize) -> Result<NodeId> {
        let x = &self.nodes[a.0].value;
        let d = *x.shape().last().unwrap();
        if offset + len > d {
            return Err(Error::Shape(format!(
                "slice_last [{offset}, {}) out of {d}",
                offset + len
            )));
        }
        let rows: usize = x.shape()[..x.rank() - 1].iter().product();
        let mut shape = x.shape()[..x.rank() - 1].to_vec();
        shape.push(len);
        let mut out = Tensor::zeros(shape);
        for r in 0..rows {
            out.data_mut()[r * len..(r + 1) * len]
                .copy_from_slice(&x.data()[r * d + offset..r * d + offset + len]);
        }
        Ok(self.push(out, Op::SliceLast(a.0, offset, len)))
    }

    /// Mean over the batch of `logsumexp(row) - row[target]`; fused softmax
    /// cross-entropy for integer targets.
    pub fn cross_entropy_logits(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId> {
        let x = &self.nodes[logits.0].value;
        let (b, c) = x.dims2()?;
        if targets.len() != b {
            return Err(Error::Shape(format!(
                "{} targets for batch of {b}",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::InvalidArgument(format!(
                "target class {bad} out of range for {c} classes"
            )));
        }
        let mut total = 0.0;
        for (row, &t) in x.data().chunks(c).zip(targets) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        Ok(self.push(
            Tensor::scalar(total / b as f64),
            Op::CrossEntropyLogits(logits.0, targets.to_vec()),
        ))
    }

    /// `mean((a - b)^2)` over every element.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean_all(sq))
    }

    /// Reverse pass from a scalar loss; gradients for parameter leaves are
    /// accumulated into `store`. Errors if no forward pass was recorded or
    /// the loss is not scalar.
    pub fn backward(&mut self, loss: NodeId, store: &mut ParameterStore) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidArgument(
                "backward called before any forward computation".into(),
            ));
        }
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let n = self.nodes.len();
        self.grads = vec![None; n];
        self.grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..n).rev() {
            let is_leaf = matches!(self.nodes[i].op, Op::Leaf { .. } | Op::Detach);
            if is_leaf {
                continue;
            }
            let Some(g) = std::mem::take(&mut self.grads[i]) else {
                continue;
            };
            self.propagate(i, &g)?;
        }

        for i in 0..n {
            if let Op::Leaf { param: Some(name) } = &self.nodes[i].op {
                if let Some(g) = &self.grads[i] {
                    store.accumulate_grad(name, g)?;
                }
            }
        }
        store.grads_ready = true;
        self.ran_backward = true;
        Ok(())
    }

    fn acc(&mut self, id: usize, contribution: Tensor) {
        match &mut self.grads[id] {
            Some(g) => g.add_assign(&contribution),
            slot => *slot = Some(contribution),
        }
    }

    fn acc_shape(&mut self, id: usize) -> &mut Tensor {
        if self.grads[id].is_none() {
            let shape = self.nodes[id].value.shape().to_vec();
            self.grads[id] = Some(Tensor::zeros(shape));
        }
        self.grads[id].as_mut().unwrap()
    }

    fn propagate(&mut self, i: usize, g: &Tensor) -> Result<()> {
        // Ops are matched by moving minimal data out to appease borrows.
        enum P {
            One(usize, Tensor),
            Two(usize, Tensor, usize, Tensor),
        }
        let out = match &self.nodes[i].op {
            Op::Leaf { .. } | Op::Detach => return Ok(()),
            Op::Add(a, b) => P::Two(*a, g.clone(), *b, g.clone()),
            Op::Sub(a, b) => P::Two(*a, g.clone(), *b, g.map(|v| -v)),
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let ga = g.zip(&self.nodes[b].value, |x, y| x * y)?;
                let gb = g.zip(&self.nodes[a].value, |x, y| x * y)?;
                P::Two(a, ga, b, gb)
            }
            Op::Scale(a, c) => P::One(*a, g.map(|v| v * c)),
            Op::BroadcastAdd(a, b) => {
                let (a, b) = (*a, *b);
                let gb = Tensor::reduce_from(g, self.nodes[b].value.shape());
                P::Two(a, g.clone(), b, gb)
            }
            Op::BroadcastMul(a, b) => {
                let (a, b) = (*a, *b);
                let bb = self.nodes[b].value.broadcast_to(self.nodes[a].value.shape())?;
                let ga = g.zip(&bb, |x, y| x * y)?;
                let gxa = g.zip(&self.nodes[a].value, |x, y| x * y)?;
                let gb = Tensor::reduce_from(&gxa, self.nodes[b].value.shape());
                P::Two(a, ga, b, gb)
            }
            Op::Matmul(a, b) => {
                let (a, b) = (*a, *b);
                let (m, k) = self.nodes[a].value.dims2()?;
                let n = self.nodes[b].value.dims2()?.1;
                // dA += G * B^T
                {
                    let bval = self.nodes[b].value.data().to_vec();
                    let ga = self.acc_shape(a);
                    gemm(m, n, k, 1.0, g.data(), false, &bval, true, 1.0, ga.data_mut());
                }
                // dB += A^T * G
                {
                    let aval = self.nodes[a].value.data().to_vec();
                    let gb = self.acc_shape(b);
                    gemm(k, m, n, 1.0, &aval, true, g.data(), false, 1.0, gb.data_mut());
                }
                return Ok(());
            }
            Op::Bmm(a, b) => {
                let (a, b) = (*a, *b);
                let (bs, m, k) = self.nodes[a].value.dims3()?;
                let n = self.nodes[b].value.dims3()?.2;
                {
                    let bval = self.nodes[b].value.data().to_vec();
                    let ga = self.acc_shape(a);
                    for s in 0..bs {
                        gemm(
                            m,
                            n,
                            k,
                            1.0,
                            &g.data()[s * m * n..(s + 1) * m * n],
                            false,
                            &bval[s * k * n..(s + 1) * k * n],
                            true,
                            1.0,
                            &mut ga.data_mut()[s * m * k..(s + 1) * m * k],
                        );
                    }
                }
                {
                    let aval = self.nodes[a].value.data().to_vec();
                    let gb = self.acc_shape(b);
                    for s in 0..bs {
                        gemm(
                            k,
                            m,
                            n,
                            1.0,
                            &aval[s * m * k..(s + 1) * m * k],
                            true,
                            &g.data()[s * m * n..(s + 1) * m * n],
                            false,
                            1.0,
                            &mut gb.data_mut()[s * k * n..(s + 1) * k * n],
                        );
                    }
                }
                return Ok(());
            }
            Op::TransposeLast2(a) => P::One(*a, g.transpose_last2()?),
            Op::Reshape(a) => {
                let a = *a;
                let shape = self.nodes[a].value.shape().to_vec();
                P::One(a, g.reshaped(shape)?)
            }
            Op::GatherRows(t, ids) => {
                let (t, ids) = (*t, ids.clone());
                let w = self.nodes[t].value.dims2()?.1;
                let gt = self.acc_shape(t);
                for (r, &id) in ids.iter().enumerate() {
                    let dst = &mut gt.data_mut()[id * w..(id + 1) * w];
                    for (d, s) in dst.iter_mut().zip(&g.data()[r * w..(r + 1) * w]) {
                        *d += s;
                    }
                }
                return Ok(());
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[i].value;
                P::One(*a, g.zip(y, |gv, yv| gv * yv * (1.0 - yv))?)
            }
            Op::Relu(a) => {
                let a = *a;
                let x = &self.nodes[a].value;
                P::One(a, g.zip(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 })?)
            }
            Op::LayerNorm(a) => {
                let a = *a;
                let x = &self.nodes[a].value;
                let d = *x.shape().last().unwrap();
                let mut dx = Tensor::zeros(x.shape().to_vec());
                for ((row_x, row_g), row_dx) in x
                    .data()
                    .chunks(d)
                    .zip(g.data().chunks(d))
                    .zip(dx.data_mut().chunks_mut(d))
                {
                    let (mean, inv) = row_stats(row_x);
                    let mut g_mean = 0.0;
                    let mut gy_mean = 0.0;
                    for (&xv, &gv) in row_x.iter().zip(row_g) {
                        let y = (xv - mean) * inv;
                        g_mean += gv;
                        gy_mean += gv * y;
                    }
                    g_mean /= d as f64;
                    gy_mean /= d as f64;
                    for ((o, &xv), &gv) in row_dx.iter_mut().zip(row_x).zip(row_g) {
                        let y = (xv - mean) * inv;
                        *o = inv * (gv - g_mean - y * gy_mean);
                    }
                }
                P::One(a, dx)
            }
            Op::SoftmaxRows(a) => {
                let a = *a;
                let y = &self.nodes[i].value;
                let d = *y.shape().last().unwrap();
                let mut dx = Tensor::zeros(y.shape().to_vec());
                for ((row_y, row_g), row_dx) in y
                    .data()
                    .chunks(d)
                    .zip(g.data().chunks(d))
                    .zip(dx.data_mut().chunks_mut(d))
                {
                    let dot: f64 = row_y.iter().zip(row_g).map(|(&yv, &gv)| yv * gv).sum();
                    for ((o, &yv), &gv) in row_dx.iter_mut().zip(row_y).zip(row_g) {
                        *o = yv * (gv - dot);
                    }
                }
                P::One(a, dx)
            }
            Op::MeanAll(a) => {
                let a = *a;
                let n = self.nodes[a].value.numel() as f64;
                let v = g.item() / n;
                let shape = self.nodes[a].value.shape().to_vec();
                P::One(a, Tensor::zeros(shape).map(|_| v))
            }
            Op::SumAll(a) => {
                let a = *a;
                let v = g.item();
                let shape = self.nodes[a].value.shape().to_vec();
                P::One(a, Tensor::zeros(shape).map(|_| v))
            }
            Op::MeanLast(a) => {
                let a = *a;
                let shape = self.nodes[a].value.shape().to_vec();
                let d = *shape.last().unwrap();
                let mut dx = Tensor::zeros(shape);
                for (r, chunk) in dx.data_mut().chunks_mut(d).enumerate() {
                    let v = g.data()[r] / d as f64;
                    for o in chunk.iter_mut() {
                        *o = v;
                    }
                }
                P::One(a, dx)
            }
            Op::ConcatLast(parts) => {
                let parts = parts.clone();
                let total = *self.nodes[i].value.shape().last().unwrap();
                let rows = self.nodes[i].value.numel() / total;
                let mut off = 0;
                for p in parts {
                    let w = *self.nodes[p].value.shape().last().unwrap();
                    let mut gp = Tensor::zeros(self.nodes[p].value.shape().to_vec());
                    for r in 0..rows {
                        gp.data_mut()[r * w..(r + 1) * w]
                            .copy_from_slice(&g.data()[r * total + off..r * total + off + w]);
                    }
                    off += w;
                    self.acc(p, gp);
                }
                return Ok(());
            }
            Op::SliceLast(a, offset, len) => {
                let (a, offset, len) = (*a, *offset, *len);
                let d = *self.nodes[a].value.shape().last().unwrap();
                let rows = self.nodes[a].value.numel() / d;
                let ga = self.acc_shape(a);
                for r in 0..rows {
                    let dst = &mut ga.data_mut()[r * d + offset..r * d + offset + len];
                    for (o, s) in dst.iter_mut().zip(&g.data()[r * len..(r + 1) * len]) {
                        *o += s;
                    }
                }
                return Ok(());
            }
            Op::CrossEntropyLogits(a, targets) => {
                let (a, targets) = (*a, targets.clone());
                let x = &self.nodes[a].value;
                let (b, c) = x.dims2()?;
                let scale = g.item() / b as f64;
                let mut dx = Tensor::zeros(vec![b, c]);
                for ((row, &t), row_dx) in x
                    .data()
                    .chunks(c)
                    .zip(&targets)
                    .zip(dx.data_mut().chunks_mut(c))
                {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
                    for ((o, &v), j) in row_dx.iter_mut().zip(row).zip(0..) {
                        let p = (v - max).exp() / sum;
                        *o = scale * (p - if j == t { 1.0 } else { 0.0 });
                    }
                }
                P::One(a, dx)
            }
        };
        match out {
            P::One(a, ga) => self.acc(a, ga),
            P::Two(a, ga, b, gb) => {
                self.acc(a, ga);
                self.acc(b, gb);
            }
        }
        Ok(())
    }
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn row_stats(row: &[f64]) -> (f64, f64) {
    let d = row.len() as f64;
    let mean = row.iter().sum::<f64>() / d;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d;
    (mean, 1.0 / (var + LN_EPS).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store_with(entries: &[(&str, Vec<usize>, Vec<f64>)]) -> ParameterStore {
        let mut s = ParameterStore::new();
        for (name, shape, data) in entries {
            s.insert(name, Tensor::new(shape.clone(), data.clone()).unwrap());
        }
        s
    }

    #[test]
    fn quadratic_gradient() {
        // loss = sum(w * w), w = [1, 2] -> grad [2, 4]
        let mut store = store_with(&[("w", vec![2], vec![1.0, 2.0])]);
        let mut g = Graph::new();
        let w = g.param(&store, "w").unwrap();
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum_all(sq);
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.get("w").unwrap().grad.data(), &[2.0, 4.0]);
    }

    #[test]
    fn detached_branch_gets_no_gradient() {
        let mut store = store_with(&[("w", vec![2], vec![1.0, 2.0])]);
        let mut g = Graph::new();
        let w = g.param(&store, "w").unwrap();
        let d = g.detach(w);
        let prod = g.mul(w, d).unwrap(); // d treated as constant
        let loss = g.sum_all(prod);
        g.backward(loss, &mut store).unwrap();
        // d(sum(w * const))/dw = const = value of w
        assert_eq!(store.get("w").unwrap().grad.data(), &[1.0, 2.0]);
    }

    #[test]
    fn backward_without_forward_errors() {
        let mut store = ParameterStore::new();
        let mut g = Graph::new();
        assert!(g.backward(NodeId(0), &mut store).is_err());
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut store = store_with(&[("w", vec![2], vec![1.0, 2.0])]);
        let mut g = Graph::new();
        let w = g.param(&store, "w").unwrap();
        assert!(g.backward(w, &mut store).is_err());
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![1], vec![0.0]).unwrap());
        let y = g.sigmoid(x);
        assert_eq!(g.value(y).data(), &[0.5]);
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![1, 4], vec![3.0; 4]).unwrap());
        let y = g.softmax_rows(x).unwrap();
        for &v in g.value(y).data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
        let s: f64 = g.value(y).data().iter().sum();
        assert!((s - 1.0).abs() < 1e-7);
    }

    /// Central finite differences over every element of every parameter.
    fn check_grads(
        store: &mut ParameterStore,
        forward: impl Fn(&mut Graph, &ParameterStore) -> NodeId,
        tol: f64,
    ) {
        store.zero_grad();
        let mut g = Graph::new();
        let loss = forward(&mut g, store);
        g.backward(loss, store).unwrap();
        let names: Vec<String> = store.names().cloned().collect();
        let h = 1e-4;
        for name in names {
            let n = store.value(&name).unwrap().numel();
            for idx in 0..n {
                let orig = store.value(&name).unwrap().data()[idx];
                let eval = |store: &mut ParameterStore, v: f64| -> f64 {
                    store
                        .iter_mut()
                        .find(|(k, _)| *k == &name)
                        .unwrap()
                        .1
                        .value
                        .data_mut()[idx] = v;
                    let mut g = Graph::new();
                    let loss = forward(&mut g, store);
                    g.value(loss).item()
                };
                let fp = eval(store, orig + h);
                let fm = eval(store, orig - h);
                eval(store, orig);
                let fd = (fp - fm) / (2.0 * h);
                let ad = store.get(&name).unwrap().grad.data()[idx];
                let denom = ad.abs().max(fd.abs());
                if denom < 1e-7 {
                    continue;
                }
                assert!(
                    (ad - fd).abs() <= tol * denom,
                    "grad mismatch {name}[{idx}]: ad={ad} fd={fd}"
                );
            }
        }
    }

    #[test]
    fn finite_difference_two_layer_net() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParameterStore::new();
        store.insert_dense("w1", 3, 5, &mut rng);
        store.insert_zeros("b1", vec![5]);
        store.insert_dense("w2", 5, 2, &mut rng);
        store.insert_zeros("b2", vec![2]);
        let xdata: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ydata: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
        let x = Tensor::new(vec![4, 3], xdata).unwrap();
        let y = Tensor::new(vec![4, 2], ydata).unwrap();
        check_grads(
            &mut store,
            move |g, store| {
                let xi = g.input(x.clone());
                let yi = g.input(y.clone());
                let w1 = g.param(store, "w1").unwrap();
                let b1 = g.param(store, "b1").unwrap();
                let w2 = g.param(store, "w2").unwrap();
                let b2 = g.param(store, "b2").unwrap();
                let h = g.matmul(xi, w1).unwrap();
                let h = g.broadcast_add(h, b1).unwrap();
                let h = g.relu(h);
                let o = g.matmul(h, w2).unwrap();
                let o = g.broadcast_add(o, b2).unwrap();
                let o = g.sigmoid(o);
                g.mse(o, yi).unwrap()
            },
            1e-3,
        );
    }

    #[test]
    fn finite_difference_mixed_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParameterStore::new();
        store.insert_dense("w", 4, 4, &mut rng);
        store.insert_embedding("emb", 3, 4, &mut rng);
        store.insert("gain", Tensor::new(vec![4], vec![1.1, 0.9, 1.0, 1.2]).unwrap());
        let xdata: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::new(vec![2, 3, 4], xdata).unwrap();
        check_grads(
            &mut store,
            move |g, store| {
                let xi = g.input(x.clone());
                let w = g.param(store, "w").unwrap();
                let emb = g.param(store, "emb").unwrap();
                let gain = g.param(store, "gain").unwrap();
                let rows = g.gather_rows(emb, &[2, 0]).unwrap();
                let rows3 = g.reshape(rows, vec![2, 1, 4]).unwrap();
                let shifted = g.broadcast_add(xi, rows3).unwrap();
                let flat = g.reshape(shifted, vec![6, 4]).unwrap();
                let pr = g.matmul(flat, w).unwrap();
                let pr3 = g.reshape(pr, vec![2, 3, 4]).unwrap();
                let normed = g.layer_norm(pr3).unwrap();
                let gained = g.broadcast_mul(normed, gain).unwrap();
                let attn = g.softmax_rows(gained).unwrap();
                let sq = g.mul(attn, attn).unwrap();
                let m = g.mean_last(sq).unwrap();
                g.mean_all(m)
            },
            1e-3,
        );
    }

    #[test]
    fn finite_difference_bmm_softmax_concat() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParameterStore::new();
        store.insert_dense("q", 4, 4, &mut rng);
        let xdata: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::new(vec![2, 3, 4], xdata).unwrap();
        check_grads(
            &mut store,
            move |g, store| {
                let xi = g.input(x.clone());
                let wq = g.param(store, "q").unwrap();
                let flat = g.reshape(xi, vec![6, 4]).unwrap();
                let q = g.matmul(flat, wq).unwrap();
                let q3 = g.reshape(q, vec![2, 3, 4]).unwrap();
                let h0 = g.slice_last(q3, 0, 2).unwrap();
                let h1 = g.slice_last(q3, 2, 2).unwrap();
                let kt = g.transpose_last2(h1).unwrap();
                let scores = g.bmm(h0, kt).unwrap();
                let scaled = g.scale(scores, 1.0 / (2.0f64).sqrt());
                let attn = g.softmax_rows(scaled).unwrap();
                let out = g.bmm(attn, h1).unwrap();
                let cat = g.concat_last(&[out, h0]).unwrap();
                g.mean_all(cat)
            },
            1e-3,
        );
    }

    #[test]
    fn finite_difference_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParameterStore::new();
        store.insert_dense("w", 5, 3, &mut rng);
        let xdata: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::new(vec![4, 5], xdata).unwrap();
        let targets = vec![0usize, 2, 1, 2];
        check_grads(
            &mut store,
            move |g, store| {
                let xi = g.input(x.clone());
                let w = g.param(store, "w").unwrap();
                let logits = g.matmul(xi, w).unwrap();
                g.cross_entropy_logits(logits, &targets).unwrap()
            },
            1e-3,
        );
    }

    #[test]
    fn gather_out_of_range_errors() {
        let mut g = Graph::new();
        let t = g.input(Tensor::zeros(vec![3, 2]));
        assert!(g.gather_rows(t, &[3]).is_err());
    }
}
