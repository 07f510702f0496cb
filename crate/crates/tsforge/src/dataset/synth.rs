//! Synthetic desk-scale corpus: class-specific ramp-then-plateau waveforms
//! with optional oscillation, random durations and Gaussian observation
//! noise, last-frame padded to a fixed length.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SequenceCorpus;
use crate::error::{Error, Result};

/// Waveform parameters for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWaveform {
    /// Fraction of the full window spent ramping up, in (0, 1].
    pub onset_frac: f64,
    /// Plateau level the ramp settles at.
    pub plateau: f64,
    /// Oscillation frequency in cycles over the full window.
    pub freq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub channels: usize,
    pub t_len: usize,
    pub samples_per_class: usize,
    pub class_params: Vec<ClassWaveform>,
    /// Std of per-frame observation noise. Subject channel biases scale
    /// from the same knob, so zero amplitude removes all value randomness.
    pub noise_amplitude: f64,
    /// Inclusive bounds for the pre-padding duration.
    pub duration_bounds: (usize, usize),
    /// Simulated performers per corpus: each subject shares a channel-bias
    /// vector and a tempo preference across every sign it performs. Sample
    /// `i` of a class belongs to subject `i % subjects`. Use 1 to make each
    /// corpus effectively single-subject.
    #[serde(default = "default_subjects")]
    pub subjects: usize,
}

fn default_subjects() -> usize {
    5
}

impl SyntheticSpec {
    /// Benchmark profile. Plateau levels repeat every third class so that
    /// classes within a level group are separable only by onset timing,
    /// oscillation frequency and start signature; durations in
    /// [t_len/2, t_len] produce padded no-change phases.
    pub fn desk(class_count: usize, channels: usize, t_len: usize, samples_per_class: usize) -> Self {
        let class_params = (0..class_count)
            .map(|k| ClassWaveform {
                onset_frac: 0.12 + 0.08 * (k / 3) as f64,
                plateau: 1.6 + 0.8 * (k % 3) as f64,
                freq: 2.0 + 1.5 * (k % 4) as f64,
            })
            .collect();
        SyntheticSpec {
            class_count,
            channels,
            t_len,
            samples_per_class,
            class_params,
            noise_amplitude: 0.1,
            duration_bounds: (t_len / 2, t_len),
            subjects: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0 || self.channels == 0 || self.t_len == 0 {
            return Err(Error::Config("class_count, channels, t_len must be positive".into()));
        }
        if self.samples_per_class == 0 {
            return Err(Error::Config("samples_per_class must be positive".into()));
        }
        if self.class_params.len() != self.class_count {
            return Err(Error::Config(format!(
                "{} class_params for {} classes",
                self.class_params.len(),
                self.class_count
            )));
        }
        let (lo, hi) = self.duration_bounds;
        if !(1 <= lo && lo <= hi && hi <= self.t_len) {
            return Err(Error::Config(format!(
                "duration bounds ({lo}, {hi}) must satisfy 1 <= lo <= hi <= {}",
                self.t_len
            )));
        }
        if self.noise_amplitude < 0.0 {
            return Err(Error::Config("noise_amplitude must be non-negative".into()));
        }
        if self.subjects == 0 {
            return Err(Error::Config("subjects must be at least 1".into()));
        }
        for (k, p) in self.class_params.iter().enumerate() {
            if !(p.onset_frac > 0.0 && p.onset_frac <= 1.0) {
                return Err(Error::Config(format!("class {k}: onset_frac outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Sensor rest level; readings are rectified here, like a pressure sensor
/// that cannot report below its unloaded baseline.
pub const REST_LEVEL: f64 = 0.2;
/// Oscillation amplitude as a fraction of the class plateau.
const OSC_FRACTION: f64 = 0.18;
/// Start-signature activation as a fraction of the plateau.
const SIGNATURE_LEVEL: f64 = 0.3;
/// Per-sample channel bias std as a multiple of the noise amplitude;
/// stands in for subject-to-subject offset variability.
const BIAS_FACTOR: f64 = 6.0;

/// Pure function of `(spec, seed)`: identical inputs give bit-identical
/// corpora.
///
/// Each sample performs the class gesture over its randomly drawn duration:
/// onset and oscillation are parameterized by gesture progress, so duration
/// doubles as execution speed. Channel `j` of class `k` rises from a class
/// start signature to the class plateau, holds, and returns to rest by the
/// end of the gesture; a phase-shifted oscillation, the subject's channel
/// bias and per-frame noise ride on top, rectified at the rest level.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SequenceCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t, d) = (spec.t_len, spec.channels);
    let n = spec.class_count * spec.samples_per_class;
    let mut data = Vec::with_capacity(n * t * d);
    let mut labels = Vec::with_capacity(n);
    let mut valid_lengths = Vec::with_capacity(n);
    let (lo, hi) = spec.duration_bounds;

    // subjects: a channel-bias vector and a tempo preference each
    let subject_bias: Vec<Vec<f64>> = (0..spec.subjects)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    BIAS_FACTOR * spec.noise_amplitude * z
                })
                .collect()
        })
        .collect();
    let subject_tempo: Vec<f64> = (0..spec.subjects).map(|_| rng.gen_range(0.2..0.8)).collect();

    for class in 0..spec.class_count {
        let p = spec.class_params[class];
        for rep in 0..spec.samples_per_class {
            let subject = rep % spec.subjects;
            let frac = (subject_tempo[subject] + rng.gen_range(-0.2..0.2)).clamp(0.0, 1.0);
            let duration = lo + ((hi - lo) as f64 * frac).round() as usize;
            let bias = &subject_bias[subject];
            let start = data.len();
            for step in 0..duration {
                let progress = if duration > 1 {
                    step as f64 / (duration - 1) as f64
                } else {
                    1.0
                };
                for ch in 0..d {
                    let chan_scale = 0.5 + 0.5 * (ch + 1) as f64 / d as f64;
                    let signature = if (ch + class) % 3 == 0 { SIGNATURE_LEVEL } else { 0.0 };
                    let rise = (progress / p.onset_frac).min(1.0);
                    let fall = ((1.0 - progress) / p.onset_frac).min(1.0);
                    // trapezoid: up, hold, back to rest; the start signature
                    // fades out over the rise
                    let core = rise.min(fall);
                    let level = signature * (1.0 - rise) + core;
                    let phase = 2.0 * std::f64::consts::PI * ch as f64 / d as f64;
                    let osc = OSC_FRACTION
                        * p.plateau
                        * (2.0 * std::f64::consts::PI * p.freq * progress + phase).sin();
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let raw = REST_LEVEL
                        + p.plateau * chan_scale * level
                        + osc
                        + bias[ch]
                        + spec.noise_amplitude * noise;
                    data.push(raw.max(REST_LEVEL));
                }
            }
            // last-frame padding, exact copy
            let last = data[start + (duration - 1) * d..start + duration * d].to_vec();
            for _ in duration..t {
                data.extend_from_slice(&last);
            }
            labels.push(class);
            valid_lengths.push(duration);
        }
    }
    SequenceCorpus::new(t, d, spec.class_count, data, labels, valid_lengths)
}
