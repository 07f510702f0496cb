//! Masked encoder-decoder extrapolator. Frames are embedded to the model
//! width, positional and label information is added, encoder self-attention
//! is causal with a windowed view mask at the output stage, and the decoder
//! runs causally masked self- and cross-attention. Frames 2..T are generated
//! autoregressively from a first frame.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::SequenceCorpus;
use crate::error::{Error, Result};
use crate::netcore::{
    derive_seed, Adam, AttentionMask, Dense, FeedForward, Graph, LayerNorm, MultiHeadAttention,
    NodeId, ParameterStore, Tensor,
};
use crate::segloss::IntervalSegmentation;

/// Causal mask: query `i` attends keys `j <= i`.
pub fn build_causal_mask(t_in: usize) -> Result<AttentionMask> {
    if t_in == 0 {
        return Err(Error::InvalidArgument("mask needs at least one position".into()));
    }
    AttentionMask::from_allowed(t_in, t_in, |i, j| j <= i)
}

/// View mask: query `i` attends its `w` most recent keys
/// `max(0, i - w + 1) <= j <= i` (inclusive of self).
pub fn build_view_mask(t_in: usize, w: usize) -> Result<AttentionMask> {
    if t_in == 0 {
        return Err(Error::InvalidArgument("mask needs at least one position".into()));
    }
    if w < 1 {
        return Err(Error::InvalidArgument("window size must be at least 1".into()));
    }
    AttentionMask::from_allowed(t_in, t_in, |i, j| j <= i && i < j + w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqModelConfig {
    pub width: usize,
    pub heads: usize,
    pub depth: usize,
    pub ffn_mult: usize,
    pub window: usize,
    pub t_len: usize,
    pub feature_dim: usize,
    pub class_count: usize,
    /// Std of the Gaussian perturbation added to the encoder's first frame.
    pub noise_std: f64,
    pub batch_size: usize,
    /// Scales the (200, 100, 100) phase lengths.
    pub epoch_multiplier: f64,
    pub phase_lrs: (f64, f64, f64),
}

impl SeqModelConfig {
    /// Small profile sized so training finishes in minutes on a CPU.
    pub fn desk(t_len: usize, feature_dim: usize, class_count: usize, window: usize) -> Self {
        SeqModelConfig {
            width: 64,
            heads: 4,
            depth: 2,
            ffn_mult: 2,
            window,
            t_len,
            feature_dim,
            class_count,
            noise_std: 0.1,
            batch_size: 50,
            epoch_multiplier: 0.15,
            phase_lrs: (1e-3, 1e-3, 1e-4),
        }
    }

    /// Full-size profile matching the published architecture.
    pub fn paper_scale(t_len: usize, feature_dim: usize, class_count: usize, window: usize) -> Self {
        SeqModelConfig {
            width: 512,
            heads: 8,
            depth: 6,
            ffn_mult: 4,
            window,
            t_len,
            feature_dim,
            class_count,
            noise_std: 0.1,
            batch_size: 32,
            epoch_multiplier: 1.0,
            phase_lrs: (1e-4, 1e-4, 1e-5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::Config(format!(
                "width {} not divisible by heads {}",
                self.width, self.heads
            )));
        }
        if self.window < 1 {
            return Err(Error::Config("window size must be >= 1".into()));
        }
        if self.depth < 1 {
            return Err(Error::Config("depth must be >= 1".into()));
        }
        if self.t_len < 2 {
            return Err(Error::Config("sequence length must be >= 2".into()));
        }
        if self.feature_dim == 0 || self.class_count == 0 || self.ffn_mult == 0 {
            return Err(Error::Config("dims must be positive".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }
        if self.batch_size == 0 || self.epoch_multiplier <= 0.0 {
            return Err(Error::Config("batch size and epoch multiplier must be positive".into()));
        }
        let (a, b, c) = self.phase_lrs;
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err(Error::Config("phase learning rates must be positive".into()));
        }
        Ok(())
    }

    /// Phase lengths after desk scaling, each at least one epoch.
    pub fn phase_epochs(&self) -> (usize, usize, usize) {
        let scale = |base: usize| ((base as f64 * self.epoch_multiplier).round() as usize).max(1);
        (scale(200), scale(100), scale(100))
    }
}

#[derive(Debug, Clone)]
struct EncoderBlock {
    attn: MultiHeadAttention,
    ln1: LayerNorm,
    ffn: FeedForward,
    ln2: LayerNorm,
}

#[derive(Debug, Clone)]
struct DecoderBlock {
    self_attn: MultiHeadAttention,
    ln1: LayerNorm,
    cross_attn: MultiHeadAttention,
    ln2: LayerNorm,
    ffn: FeedForward,
    ln3: LayerNorm,
}

/// Parameter container plus the layer wiring.
#[derive(Debug, Clone)]
pub struct SeqModel {
    pub config: SeqModelConfig,
    pub store: ParameterStore,
    frame_emb: Dense,
    positional: Tensor,
    encoder: Vec<EncoderBlock>,
    view_attn: MultiHeadAttention,
    view_ln: LayerNorm,
    decoder: Vec<DecoderBlock>,
    head: Dense,
}

const LABEL_EMB: &str = "seq.label_emb";

/// Fixed sinusoidal positional table `(t_len, width)`.
fn sinusoidal_table(t_len: usize, width: usize) -> Tensor {
    let mut data = vec![0.0; t_len * width];
    for pos in 0..t_len {
        for i in 0..width {
            let pair = (i / 2) as f64;
            let rate = 1.0 / 10000f64.powf(2.0 * pair / width as f64);
            let angle = pos as f64 * rate;
            data[pos * width + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(vec![t_len, width], data).unwrap()
}

impl SeqModel {
    pub fn init(config: SeqModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "seqmodel-init"));
        let mut store = ParameterStore::new();
        let frame_emb = Dense::init(&mut store, "seq.frame_emb", config.feature_dim, config.width, &mut rng);
        store.insert_embedding(LABEL_EMB, config.class_count, config.width, &mut rng);
        let ffn_hidden = config.width * config.ffn_mult;
        let mut encoder = Vec::with_capacity(config.depth);
        for b in 0..config.depth {
            encoder.push(EncoderBlock {
                attn: MultiHeadAttention::init(&mut store, &format!("seq.enc.{b}.attn"), config.width, config.heads, &mut rng)?,
                ln1: LayerNorm::init(&mut store, &format!("seq.enc.{b}.ln1"), config.width),
                ffn: FeedForward::init(&mut store, &format!("seq.enc.{b}.ffn"), config.width, ffn_hidden, &mut rng),
                ln2: LayerNorm::init(&mut store, &format!("seq.enc.{b}.ln2"), config.width),
            });
        }
        let view_attn =
            MultiHeadAttention::init(&mut store, "seq.enc.view.attn", config.width, config.heads, &mut rng)?;
        let view_ln = LayerNorm::init(&mut store, "seq.enc.view.ln", config.width);
        let mut decoder = Vec::with_capacity(config.depth);
        for b in 0..config.depth {
            decoder.push(DecoderBlock {
                self_attn: MultiHeadAttention::init(&mut store, &format!("seq.dec.{b}.self"), config.width, config.heads, &mut rng)?,
                ln1: LayerNorm::init(&mut store, &format!("seq.dec.{b}.ln1"), config.width),
                cross_attn: MultiHeadAttention::init(&mut store, &format!("seq.dec.{b}.cross"), config.width, config.heads, &mut rng)?,
                ln2: LayerNorm::init(&mut store, &format!("seq.dec.{b}.ln2"), config.width),
                ffn: FeedForward::init(&mut store, &format!("seq.dec.{b}.ffn"), config.width, ffn_hidden, &mut rng),
                ln3: LayerNorm::init(&mut store, &format!("seq.dec.{b}.ln3"), config.width),
            });
        }
        let head = Dense::init(&mut store, "seq.head", config.width, config.feature_dim, &mut rng);
        let positional = sinusoidal_table(config.t_len, config.width);
        Ok(SeqModel {
            config,
            store,
            frame_emb,
            positional,
            encoder,
            view_attn,
            view_ln,
            decoder,
            head,
        })
    }

    /// Embed frames and add positional and label information.
    fn embed(
        &self,
        g: &mut Graph,
        frames: NodeId,
        labels: &[usize],
        t_in: usize,
    ) -> Result<NodeId> {
        let emb = self.frame_emb.forward(g, &self.store, frames)?;
        let pos_slice = {
            let w = self.config.width;
            let data = self.positional.data()[..t_in * w].to_vec();
            Tensor::new(vec![t_in, w], data)?
        };
        let pos = g.input(pos_slice);
        let with_pos = g.broadcast_add(emb, pos)?;
        let table = g.param(&self.store, LABEL_EMB)?;
        let lab = g.gather_rows(table, labels)?;
        let lab3 = g.reshape(lab, vec![labels.len(), 1, self.config.width])?;
        g.broadcast_add(with_pos, lab3)
    }

    /// Full teacher-forcing forward. Returns `(B, t_in, d)` predictions in
    /// (0, 1). Encoder and decoder inputs have identical shapes.
    pub fn forward(
        &self,
        g: &mut Graph,
        enc_frames: Tensor,
        dec_frames: Tensor,
        labels: &[usize],
    ) -> Result<NodeId> {
        let (b, t_in, d) = enc_frames.dims3()?;
        if dec_frames.shape() != [b, t_in, d] {
            return Err(Error::Shape("encoder/decoder inputs must share shape".into()));
        }
        if d != self.config.feature_dim {
            return Err(Error::Shape(format!(
                "expected {} channels, got {d}",
                self.config.feature_dim
            )));
        }
        if labels.len() != b {
            return Err(Error::Shape(format!("{} labels for batch {b}", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.config.class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside [0, {})",
                self.config.class_count
            )));
        }
        if t_in > self.config.t_len {
            return Err(Error::Shape(format!(
                "sequence of {t_in} exceeds configured length {}",
                self.config.t_len
            )));
        }
        let causal = build_causal_mask(t_in)?;
        let view = build_view_mask(t_in, self.config.window)?.intersect(&causal)?;

        let enc_in = g.input(enc_frames);
        let mut h = self.embed(g, enc_in, labels, t_in)?;
        for block in &self.encoder {
            let attn = block.attn.forward(g, &self.store, h, h, h, &causal)?;
            let sum = g.add(h, attn)?;
            h = block.ln1.forward(g, &self.store, sum)?;
            let ffn = block.ffn.forward(g, &self.store, h)?;
            let sum = g.add(h, ffn)?;
            h = block.ln2.forward(g, &self.store, sum)?;
        }
        // windowed attention at the encoder output stage
        let viewed = self.view_attn.forward(g, &self.store, h, h, h, &view)?;
        let sum = g.add(h, viewed)?;
        let memory = self.view_ln.forward(g, &self.store, sum)?;

        let dec_in = g.input(dec_frames);
        let mut x = self.embed(g, dec_in, labels, t_in)?;
        for block in &self.decoder {
            let attn = block.self_attn.forward(g, &self.store, x, x, x, &causal)?;
            let sum = g.add(x, attn)?;
            x = block.ln1.forward(g, &self.store, sum)?;
            // causal cross-attention: position i may only read memory 0..=i,
            // otherwise teacher forcing leaks the target frame through the memory
            let cross = block.cross_attn.forward(g, &self.store, x, memory, memory, &causal)?;
            let sum = g.add(x, cross)?;
            x = block.ln2.forward(g, &self.store, sum)?;
            let ffn = block.ffn.forward(g, &self.store, x)?;
            let sum = g.add(x, ffn)?;
            x = block.ln3.forward(g, &self.store, sum)?;
        }
        let out = self.head.forward(g, &self.store, x)?;
        Ok(g.sigmoid(out))
    }
}

/// Which objective drives a training phase.
#[derive(Debug, Clone, Copy)]
pub enum SeqLoss<'a> {
    /// Per-step squared error summed over time (mean over batch and
    /// channels): the unit-weight case of the interval loss.
    Mse,
    Weighted(&'a IntervalSegmentation),
}

impl<'a> SeqLoss<'a> {
    fn step_weights(&self, t_out: usize) -> Vec<f64> {
        match self {
            // output row r predicts 1-based position r + 2
            SeqLoss::Weighted(seg) => seg.step_weights(t_out, 1),
            SeqLoss::Mse => vec![1.0; t_out],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            SeqLoss::Mse => "mse",
            SeqLoss::Weighted(_) => "weighted",
        }
    }
}

/// Teacher-forcing batch: encoder (noised first frame) and decoder inputs
/// are frames 0..T-2, targets are frames 1..T-1.
fn teacher_batch(
    corpus: &SequenceCorpus,
    indices: &[usize],
    noise_std: f64,
    rng: &mut ChaCha8Rng,
) -> (Tensor, Tensor, Tensor, Vec<usize>) {
    let (t, d) = (corpus.t_len(), corpus.channels());
    let t_in = t - 1;
    let b = indices.len();
    let mut enc = Tensor::zeros(vec![b, t_in, d]);
    let mut dec = Tensor::zeros(vec![b, t_in, d]);
    let mut target = Tensor::zeros(vec![b, t_in, d]);
    let mut labels = Vec::with_capacity(b);
    for (row, &i) in indices.iter().enumerate() {
        let sample = corpus.sample(i);
        let base = row * t_in * d;
        enc.data_mut()[base..base + t_in * d].copy_from_slice(&sample[..t_in * d]);
        dec.data_mut()[base..base + t_in * d].copy_from_slice(&sample[..t_in * d]);
        target.data_mut()[base..base + t_in * d].copy_from_slice(&sample[d..t * d]);
        for j in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            enc.data_mut()[base + j] += noise_std * z;
        }
        labels.push(corpus.labels()[i]);
    }
    (enc, dec, target, labels)
}

fn loss_node(
    g: &mut Graph,
    pred: NodeId,
    target: Tensor,
    weights: &[f64],
) -> Result<NodeId> {
    let (b, t_out, _) = g.value(pred).dims3()?;
    debug_assert_eq!(weights.len(), t_out);
    let tgt = g.input(target);
    let diff = g.sub(pred, tgt)?;
    let sq = g.mul(diff, diff)?;
    let per_step = g.mean_last(sq)?; // (B, T-1)
    let w = g.input(Tensor::new(vec![t_out], weights.to_vec())?);
    let weighted = g.broadcast_mul(per_step, w)?;
    let total = g.sum_all(weighted);
    Ok(g.scale(total, 1.0 / b as f64))
}

/// Scalar teacher-forcing loss under the given objective; seeded noise.
pub fn teacher_forced_loss(
    model: &SeqModel,
    corpus: &SequenceCorpus,
    loss: SeqLoss,
    noise_std: f64,
    seed: u64,
) -> Result<f64> {
    if noise_std < 0.0 {
        return Err(Error::InvalidArgument("noise_std must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = (0..corpus.len()).collect();
    let (enc, dec, target, labels) = teacher_batch(corpus, &indices, noise_std, &mut rng);
    let weights = loss.step_weights(corpus.t_len() - 1);
    let mut g = Graph::new();
    let pred = model.forward(&mut g, enc, dec, &labels)?;
    let node = loss_node(&mut g, pred, target, &weights)?;
    Ok(g.value(node).item())
}

/// `teacher_forced_loss` with a reverse pass: gradients are accumulated
/// into the model store. Used by training and gradient-verification suites.
pub fn teacher_forced_loss_backward(
    model: &mut SeqModel,
    corpus: &SequenceCorpus,
    loss: SeqLoss,
    noise_std: f64,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = (0..corpus.len()).collect();
    let (enc, dec, target, labels) = teacher_batch(corpus, &indices, noise_std, &mut rng);
    let weights = loss.step_weights(corpus.t_len() - 1);
    let mut g = Graph::new();
    let pred = model.forward(&mut g, enc, dec, &labels)?;
    let node = loss_node(&mut g, pred, target, &weights)?;
    let value = g.value(node).item();
    g.backward(node, &mut model.store)?;
    Ok(value)
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: usize,
    pub loss_kind: String,
    pub learning_rate: f64,
    pub loss: f64,
    /// Unweighted per-interval squared error (Eq. 6 inner sums).
    pub per_interval: [f64; 4],
}

fn interval_errors(
    pred: &Tensor,
    target: &Tensor,
    seg: &IntervalSegmentation,
) -> [f64; 4] {
    let (b, t_out, d) = pred.dims3().unwrap();
    let mut out = [0.0; 4];
    for (k, interval) in seg.intervals.iter().enumerate() {
        let mut acc = 0.0;
        for &pos in interval {
            // 1-based position pos corresponds to output row pos - 2
            if pos < 2 || pos - 2 >= t_out {
                continue;
            }
            let r = pos - 2;
            for s in 0..b {
                let base = (s * t_out + r) * d;
                for j in 0..d {
                    let e = pred.data()[base + j] - target.data()[base + j];
                    acc += e * e;
                }
            }
        }
        out[k] = acc / (b * d) as f64;
    }
    out
}

/// Three-phase schedule: weighted loss, plain MSE to smooth, then weighted
/// again at a tenth of the learning rate. Phase lengths come from the
/// config multiplier against (200, 100, 100).
pub fn alternating_train(
    model: &mut SeqModel,
    corpus: &SequenceCorpus,
    segmentation: &IntervalSegmentation,
    seed: u64,
) -> Result<Vec<EpochLog>> {
    if corpus.t_len() != model.config.t_len {
        return Err(Error::Shape(format!(
            "corpus length {} vs model length {}",
            corpus.t_len(),
            model.config.t_len
        )));
    }
    let (e1, e2, e3) = model.config.phase_epochs();
    let (lr1, lr2, lr3) = model.config.phase_lrs;
    let phases: [(usize, f64, bool); 3] = [(e1, lr1, true), (e2, lr2, false), (e3, lr3, true)];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "seq-train"));
    let adam = Adam::default();
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let t_out = corpus.t_len() - 1;
    let mut epoch = 0usize;
    for (phase_idx, &(epochs, lr, weighted)) in phases.iter().enumerate() {
        let loss_kind = if weighted {
            SeqLoss::Weighted(segmentation)
        } else {
            SeqLoss::Mse
        };
        let weights = loss_kind.step_weights(t_out);
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            let mut per_interval = [0.0; 4];
            let mut batches = 0usize;
            for chunk in order.chunks(model.config.batch_size) {
                let (enc, dec, target, labels) =
                    teacher_batch(corpus, chunk, model.config.noise_std, &mut rng);
                let mut g = Graph::new();
                let pred = model.forward(&mut g, enc, dec, &labels)?;
                let node = loss_node(&mut g, pred, target.clone(), &weights)?;
                let value = g.value(node).item();
                if !value.is_finite() {
                    return Err(Error::Numerical(format!("sequence loss became {value}")));
                }
                let errs = interval_errors(g.value(pred), &target, segmentation);
                for (a, e) in per_interval.iter_mut().zip(errs) {
                    *a += e;
                }
                model.store.zero_grad();
                g.backward(node, &mut model.store)?;
                adam.step(&mut model.store, lr)?;
                epoch_loss += value;
                batches += 1;
            }
            for a in per_interval.iter_mut() {
                *a /= batches as f64;
            }
            log.push(EpochLog {
                epoch,
                phase: phase_idx + 1,
                loss_kind: loss_kind.name().to_string(),
                learning_rate: lr,
                loss: epoch_loss / batches as f64,
                per_interval,
            });
            epoch += 1;
        }
    }
    Ok(log)
}

/// Extrapolate whole sequences from first frames: the growing prefix feeds
/// both encoder and decoder, and the prediction at the last position is
/// appended until `t_len` frames exist.
pub fn generate_batch(
    model: &SeqModel,
    first_frames: &Tensor,
    labels: &[usize],
    t_len: usize,
) -> Result<Tensor> {
    let (n, d) = first_frames.dims2()?;
    if t_len < 1 {
        return Err(Error::InvalidArgument("t_len must be >= 1".into()));
    }
    if t_len > model.config.t_len {
        return Err(Error::InvalidArgument(format!(
            "t_len {t_len} exceeds configured length {}",
            model.config.t_len
        )));
    }
    if d != model.config.feature_dim {
        return Err(Error::Shape(format!(
            "first frames have {d} channels, model expects {}",
            model.config.feature_dim
        )));
    }
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} sequences", labels.len())));
    }
    let mut seq = Tensor::zeros(vec![n, t_len, d]);
    for i in 0..n {
        seq.data_mut()[i * t_len * d..i * t_len * d + d]
            .copy_from_slice(&first_frames.data()[i * d..(i + 1) * d]);
    }
    for prefix in 1..t_len {
        let mut input = Tensor::zeros(vec![n, prefix, d]);
        for i in 0..n {
            input.data_mut()[i * prefix * d..(i + 1) * prefix * d]
                .copy_from_slice(&seq.data()[i * t_len * d..i * t_len * d + prefix * d]);
        }
        let mut g = Graph::new();
        let pred = model.forward(&mut g, input.clone(), input, labels)?;
        let out = g.value(pred);
        for i in 0..n {
            let src = (i * prefix + (prefix - 1)) * d;
            let dst = i * t_len * d + prefix * d;
            let frame = out.data()[src..src + d].to_vec();
            seq.data_mut()[dst..dst + d].copy_from_slice(&frame);
        }
    }
    Ok(seq)
}

/// Single-sequence wrapper around `generate_batch`.
pub fn generate_sequence(
    model: &SeqModel,
    first_frame: &[f64],
    label: usize,
    t_len: usize,
) -> Result<Tensor> {
    let firsts = Tensor::new(vec![1, first_frame.len()], first_frame.to_vec())?;
    let out = generate_batch(model, &firsts, &[label], t_len)?;
    out.reshaped(vec![t_len, first_frame.len()])
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    config: SeqModelConfig,
    checkpoint: crate::netcore::Checkpoint,
}

pub fn save_model(model: &SeqModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let file = ModelFile {
        config: model.config.clone(),
        checkpoint: model.store.to_checkpoint(),
    };
    let path = dir.join("weights.json");
    let body = serde_json::to_string(&file).map_err(|e| Error::Config(format!("serialize model: {e}")))?;
    fs::write(&path, body).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<SeqModel> {
    let path = dir.join("weights.json");
    let body = fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: ModelFile =
        serde_json::from_str(&body).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut model = SeqModel::init(file.config, 0)?;
    model.store = ParameterStore::from_checkpoint(&file.checkpoint)?;
    Ok(model)
}
