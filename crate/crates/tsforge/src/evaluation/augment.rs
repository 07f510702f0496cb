//! Traditional augmentation baselines: additive Gaussian jitter and
//! piecewise-linear time warping with resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::SequenceCorpus;
use crate::error::{Error, Result};

/// Jitter noise std in scaled space.
pub const JITTER_STD: f64 = 0.03;
/// Interior warp knots.
pub const WARP_KNOTS: usize = 4;
/// Maximum knot displacement as a fraction of the sequence length.
pub const WARP_FRACTION: f64 = 0.1;

/// Produce `per_class` new samples per class, alternating additive jitter
/// and time warping over randomly chosen source samples. Operates in scaled
/// space; callers working in the original range scale around it. Augmented
/// samples are marked fully valid (padding no longer holds exactly).
pub fn traditional_augment(
    corpus: &SequenceCorpus,
    per_class: usize,
    seed: u64,
) -> Result<SequenceCorpus> {
    if per_class == 0 {
        return Err(Error::InvalidArgument("per_class must be positive".into()));
    }
    let (t, d) = (corpus.t_len(), corpus.channels());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(corpus.class_count() * per_class * t * d);
    let mut labels = Vec::new();
    let mut valid_lengths = Vec::new();
    for class in 0..corpus.class_count() {
        let pool = corpus.class_indices(class);
        if pool.is_empty() {
            return Err(Error::InvalidArgument(format!("class {class} has no samples")));
        }
        for k in 0..per_class {
            let source = pool[rng.gen_range(0..pool.len())];
            let sample = corpus.sample(source);
            if k % 2 == 0 {
                data.extend(jitter(sample, &mut rng));
            } else {
                data.extend(time_warp(sample, t, d, &mut rng));
            }
            labels.push(class);
            valid_lengths.push(t);
        }
    }
    SequenceCorpus::new(t, d, corpus.class_count(), data, labels, valid_lengths)
}

fn jitter(sample: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    sample
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(rng);
            v + JITTER_STD * z
        })
        .collect()
}

/// Displace interior knots of the identity time map by up to
/// `WARP_FRACTION * t`, keep the map monotone, and resample linearly.
fn time_warp(sample: &[f64], t: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let last = (t - 1) as f64;
    let mut xs = vec![0.0];
    let mut ys = vec![0.0];
    for k in 1..=WARP_KNOTS {
        let base = last * k as f64 / (WARP_KNOTS + 1) as f64;
        let shift = rng.gen_range(-WARP_FRACTION..WARP_FRACTION) * t as f64;
        xs.push(base);
        ys.push((base + shift).clamp(0.0, last));
    }
    xs.push(last);
    ys.push(last);
    // enforce strict monotonicity of source positions
    for k in 1..ys.len() {
        if ys[k] <= ys[k - 1] {
            ys[k] = (ys[k - 1] + 1e-6).min(last);
        }
    }
    let mut out = Vec::with_capacity(t * d);
    for step in 0..t {
        let x = step as f64;
        let seg = xs.windows(2).position(|w| x <= w[1]).unwrap_or(xs.len() - 2);
        let (x0, x1) = (xs[seg], xs[seg + 1]);
        let (y0, y1) = (ys[seg], ys[seg + 1]);
        let frac = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
        let src = y0 + (y1 - y0) * frac;
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(t - 1);
        let a = src - lo as f64;
        for j in 0..d {
            let v = sample[lo * d + j] * (1.0 - a) + sample[hi * d + j] * a;
            out.push(v);
        }
    }
    out
}
