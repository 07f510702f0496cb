//! Corpus representation, scaling, padding semantics and the synthetic
//! desk-scale corpus generator.

pub mod bundle;
pub mod scaler;
pub mod synth;

pub use bundle::{load_corpus, save_corpus};
pub use scaler::{Scaler, ScalerMethod};
pub use synth::{generate_synthetic, ClassWaveform, SyntheticSpec};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Labeled set of fixed-length multichannel time series with last-frame
/// padding metadata.
///
/// Samples are stored contiguously as `n x t_len x d` row-major values.
/// Frames at `t >= valid_lengths[i]` repeat the frame at
/// `valid_lengths[i] - 1` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceCorpus {
    n: usize,
    t_len: usize,
    d: usize,
    class_count: usize,
    data: Vec<f64>,
    labels: Vec<usize>,
    valid_lengths: Vec<usize>,
}

impl SequenceCorpus {
    pub fn new(
        t_len: usize,
        d: usize,
        class_count: usize,
        data: Vec<f64>,
        labels: Vec<usize>,
        valid_lengths: Vec<usize>,
    ) -> Result<Self> {
        if t_len == 0 || d == 0 || class_count == 0 {
            return Err(Error::Integrity("t_len, d and class_count must be positive".into()));
        }
        let frame = t_len * d;
        if frame == 0 || data.len() % frame != 0 {
            return Err(Error::Integrity(format!(
                "data length {} is not a multiple of t_len*d = {}",
                data.len(),
                frame
            )));
        }
        let n = data.len() / frame;
        if labels.len() != n || valid_lengths.len() != n {
            return Err(Error::Integrity(format!(
                "{n} samples but {} labels and {} valid_lengths",
                labels.len(),
                valid_lengths.len()
            )));
        }
        let corpus = SequenceCorpus {
            n,
            t_len,
            d,
            class_count,
            data,
            labels,
            valid_lengths,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    /// Re-check every invariant: label range, valid lengths, padding.
    pub fn validate(&self) -> Result<()> {
        for (i, &label) in self.labels.iter().enumerate() {
            if label >= self.class_count {
                return Err(Error::Integrity(format!(
                    "sample {i} has label {label} outside [0, {})",
                    self.class_count
                )));
            }
        }
        for (i, &vl) in self.valid_lengths.iter().enumerate() {
            if vl == 0 || vl > self.t_len {
                return Err(Error::Integrity(format!(
                    "sample {i} has valid_length {vl} outside [1, {}]",
                    self.t_len
                )));
            }
            let last = self.frame(i, vl - 1).to_vec();
            for t in vl..self.t_len {
                if self.frame(i, t) != last.as_slice() {
                    return Err(Error::Integrity(format!(
                        "sample {i}: padded frame at t={t} differs from last valid frame (t={})",
                        vl - 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn channels(&self) -> usize {
        self.d
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn valid_lengths(&self) -> &[usize] {
        &self.valid_lengths
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let sz = self.t_len * self.d;
        &self.data[i * sz..(i + 1) * sz]
    }

    pub fn frame(&self, i: usize, t: usize) -> &[f64] {
        let sz = self.t_len * self.d;
        &self.data[i * sz + t * self.d..i * sz + (t + 1) * self.d]
    }

    /// First-time-step vectors as a flat `(n, d)` matrix.
    pub fn first_frames(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.d);
        for i in 0..self.n {
            out.extend_from_slice(self.frame(i, 0));
        }
        out
    }

    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.labels[i] == class).collect()
    }

    pub fn per_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// New corpus containing the given samples, preserving order.
    pub fn subset(&self, indices: &[usize]) -> Result<SequenceCorpus> {
        let sz = self.t_len * self.d;
        let mut data = Vec::with_capacity(indices.len() * sz);
        let mut labels = Vec::with_capacity(indices.len());
        let mut valid_lengths = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n {
                return Err(Error::InvalidArgument(format!("sample index {i} out of range")));
            }
            data.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
            valid_lengths.push(self.valid_lengths[i]);
        }
        SequenceCorpus::new(self.t_len, self.d, self.class_count, data, labels, valid_lengths)
    }

    /// Concatenate two corpora of identical geometry.
    pub fn merged_with(&self, other: &SequenceCorpus) -> Result<SequenceCorpus> {
        if self.t_len != other.t_len || self.d != other.d || self.class_count != other.class_count {
            return Err(Error::Shape(format!(
                "cannot merge ({},{},{}) with ({},{},{})",
                self.t_len, self.d, self.class_count, other.t_len, other.d, other.class_count
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut valid_lengths = self.valid_lengths.clone();
        valid_lengths.extend_from_slice(&other.valid_lengths);
        SequenceCorpus::new(self.t_len, self.d, self.class_count, data, labels, valid_lengths)
    }

    /// Map every value through `f` channel-wise; padding is preserved because
    /// the map is applied per element deterministically.
    pub(crate) fn map_channels(&self, f: impl Fn(usize, f64) -> f64) -> SequenceCorpus {
        let mut out = self.clone();
        for (idx, v) in out.data.iter_mut().enumerate() {
            *v = f(idx % self.d, *v);
        }
        out
    }
}

/// Extend variable-length raw sequences to `t_len` by repeating the final
/// frame, recording the original durations.
pub fn pad_to_length(
    sequences: &[Vec<Vec<f64>>],
    labels: &[usize],
    class_count: usize,
    t_len: usize,
) -> Result<SequenceCorpus> {
    if sequences.is_empty() {
        return Err(Error::InvalidArgument("no sequences to pad".into()));
    }
    if sequences.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} sequences but {} labels",
            sequences.len(),
            labels.len()
        )));
    }
    let d = sequences[0].first().map(|f| f.len()).unwrap_or(0);
    let mut data = Vec::with_capacity(sequences.len() * t_len * d);
    let mut valid_lengths = Vec::with_capacity(sequences.len());
    for (i, seq) in sequences.iter().enumerate() {
        let len = seq.len();
        if len == 0 {
            return Err(Error::InvalidArgument(format!("sequence {i} is empty")));
        }
        if len > t_len {
            return Err(Error::InvalidArgument(format!(
                "sequence {i} has length {len} > t_len {t_len}"
            )));
        }
        for frame in seq {
            if frame.len() != d {
                return Err(Error::Shape(format!(
                    "sequence {i} has a frame with {} channels, expected {d}",
                    frame.len()
                )));
            }
            data.extend_from_slice(frame);
        }
        let last = seq[len - 1].clone();
        for _ in len..t_len {
            data.extend_from_slice(&last);
        }
        valid_lengths.push(len);
    }
    SequenceCorpus::new(t_len, d, class_count, data, labels.to_vec(), valid_lengths)
}

/// Split every class into two parts of sizes `floor(frac*n_c)` and the rest,
/// shuffled under the seed. Both parts keep at least one sample per class.
pub fn split_per_class(
    corpus: &SequenceCorpus,
    fraction: f64,
    seed: u64,
) -> Result<(SequenceCorpus, SequenceCorpus)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for class in 0..corpus.class_count() {
        let mut idx = corpus.class_indices(class);
        if idx.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} sample(s); need at least 2 to split",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let take = ((idx.len() as f64 * fraction).floor() as usize).clamp(1, idx.len() - 1);
        first.extend_from_slice(&idx[..take]);
        second.extend_from_slice(&idx[take..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((corpus.subset(&first)?, corpus.subset(&second)?))
}
