//! Per-channel affine scaling with exact inversion.

use serde::{Deserialize, Serialize};

use super::SequenceCorpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerMethod {
    /// Map per-channel [min, max] onto [0, 1].
    UnitInterval,
    /// Map per-channel [min, max] onto [-1, 1].
    SignedUnit,
    /// Zero mean, unit population standard deviation per channel.
    ZScore,
}

impl ScalerMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unit_interval" | "unit" => Ok(ScalerMethod::UnitInterval),
            "signed_unit" | "signed" => Ok(ScalerMethod::SignedUnit),
            "zscore" => Ok(ScalerMethod::ZScore),
            other => Err(Error::Config(format!("unknown scaler method '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScalerMethod::UnitInterval => "unit_interval",
            ScalerMethod::SignedUnit => "signed_unit",
            ScalerMethod::ZScore => "zscore",
        }
    }
}

/// Forward transform is `(x - center) / scale` per channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub center: f64,
    pub scale: f64,
}

/// Fitted per-channel scaler. Flat channels (max == min, or zero variance)
/// map to constant 0 and invert back to their constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub method: ScalerMethod,
    pub stats: Vec<ChannelStats>,
}

impl Scaler {
    /// Fit statistics per channel over all samples and all time steps.
    pub fn fit(corpus: &SequenceCorpus, method: ScalerMethod) -> Result<Scaler> {
        if corpus.is_empty() {
            return Err(Error::InvalidArgument("cannot fit a scaler on an empty corpus".into()));
        }
        let d = corpus.channels();
        let mut stats = Vec::with_capacity(d);
        for ch in 0..d {
            let values = corpus.data().iter().skip(ch).step_by(d);
            let st = match method {
                ScalerMethod::UnitInterval => {
                    let (min, max) = min_max(values);
                    if max > min {
                        ChannelStats { center: min, scale: max - min }
                    } else {
                        ChannelStats { center: min, scale: 1.0 }
                    }
                }
                ScalerMethod::SignedUnit => {
                    let (min, max) = min_max(values);
                    if max > min {
                        ChannelStats {
                            center: 0.5 * (min + max),
                            scale: 0.5 * (max - min),
                        }
                    } else {
                        ChannelStats { center: min, scale: 1.0 }
                    }
                }
                ScalerMethod::ZScore => {
                    let vals: Vec<f64> = values.copied().collect();
                    let n = vals.len() as f64;
                    let mean = vals.iter().sum::<f64>() / n;
                    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let std = var.sqrt();
                    ChannelStats {
                        center: mean,
                        scale: if std > 0.0 { std } else { 1.0 },
                    }
                }
            };
            stats.push(st);
        }
        Ok(Scaler { method, stats })
    }

    pub fn channels(&self) -> usize {
        self.stats.len()
    }

    fn check_channels(&self, d: usize) -> Result<()> {
        if d != self.stats.len() {
            return Err(Error::Shape(format!(
                "scaler fitted on {} channels applied to {d}",
                self.stats.len()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, corpus: &SequenceCorpus) -> Result<SequenceCorpus> {
        self.check_channels(corpus.channels())?;
        Ok(corpus.map_channels(|ch, v| {
            let s = &self.stats[ch];
            (v - s.center) / s.scale
        }))
    }

    /// Inverse transform; out-of-range values map linearly, nothing clamps.
    pub fn invert(&self, corpus: &SequenceCorpus) -> Result<SequenceCorpus> {
        self.check_channels(corpus.channels())?;
        Ok(corpus.map_channels(|ch, v| {
            let s = &self.stats[ch];
            s.center + s.scale * v
        }))
    }

    /// Scale a flat `(rows, d)` frame matrix in place.
    pub fn apply_frames(&self, frames: &mut [f64], d: usize) -> Result<()> {
        self.check_channels(d)?;
        for (i, v) in frames.iter_mut().enumerate() {
            let s = &self.stats[i % d];
            *v = (*v - s.center) / s.scale;
        }
        Ok(())
    }

    pub fn invert_frames(&self, frames: &mut [f64], d: usize) -> Result<()> {
        self.check_channels(d)?;
        for (i, v) in frames.iter_mut().enumerate() {
            let s = &self.stats[i % d];
            *v = s.center + s.scale * *v;
        }
        Ok(())
    }

    /// Valid output range of the forward transform, where one exists.
    /// Used to clamp generated samples back into scaled space.
    pub fn scaled_range(&self) -> Option<(f64, f64)> {
        match self.method {
            ScalerMethod::UnitInterval => Some((0.0, 1.0)),
            ScalerMethod::SignedUnit => Some((-1.0, 1.0)),
            ScalerMethod::ZScore => None,
        }
    }
}

fn min_max<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
    }
    (min, max)
}
