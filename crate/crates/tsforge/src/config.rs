//! Structured pipeline configuration with validation and hashing.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::SyntheticSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    /// Inline synthetic corpus specification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    /// Existing corpus bundles, used instead of synthesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionSettings {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for DiffusionSettings {
    fn default() -> Self {
        DiffusionSettings {
            steps: 10,
            beta_min: 1e-2,
            beta_max: 0.3,
            hidden: 128,
            epochs: 400,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeqSettings {
    pub width: usize,
    pub heads: usize,
    pub depth: usize,
    pub ffn_mult: usize,
    pub windows: Vec<usize>,
    pub noise_std: f64,
    pub batch_size: usize,
    pub epoch_multiplier: f64,
    pub phase_lrs: (f64, f64, f64),
}

impl Default for SeqSettings {
    fn default() -> Self {
        SeqSettings {
            width: 64,
            heads: 4,
            depth: 2,
            ffn_mult: 2,
            windows: vec![1, 3, 5],
            noise_std: 0.1,
            batch_size: 50,
            epoch_multiplier: 0.15,
            phase_lrs: (1e-3, 1e-3, 1e-4),
        }
    }
}

/// Full-size profile: the published architecture dimensions.
impl SeqSettings {
    pub fn paper_scale() -> Self {
        SeqSettings {
            width: 512,
            heads: 8,
            depth: 6,
            ffn_mult: 4,
            windows: vec![1, 3, 5],
            noise_std: 0.1,
            batch_size: 32,
            epoch_multiplier: 1.0,
            phase_lrs: (1e-4, 1e-4, 1e-5),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentationSettings {
    pub degree: usize,
    pub weights: [f64; 4],
}

impl Default for SegmentationSettings {
    fn default() -> Self {
        SegmentationSettings {
            degree: 20,
            weights: crate::segloss::DEFAULT_WEIGHTS,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationSettings {
    /// First frames generated per class for the Table-1 FID matrix.
    pub fid_gen_per_class: usize,
    pub fid_repetitions: usize,
    pub subsample_fraction: f64,
    /// Sequences generated per class for augmentation.
    pub gen_per_class: usize,
    pub classifier_stride: usize,
    pub classifier_hidden: usize,
    pub classifier_epochs: usize,
    pub classifier_batch_size: usize,
    pub classifier_learning_rate: f64,
    pub classifier_seeds: Vec<u64>,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        EvaluationSettings {
            fid_gen_per_class: 100,
            fid_repetitions: 100,
            subsample_fraction: 0.8,
            gen_per_class: 25,
            classifier_stride: 4,
            classifier_hidden: 64,
            classifier_epochs: 300,
            classifier_batch_size: 50,
            classifier_learning_rate: 1e-3,
            classifier_seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub scaler_method: String,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub diffusion: DiffusionSettings,
    #[serde(default)]
    pub seqmodel: SeqSettings,
    #[serde(default)]
    pub segmentation: SegmentationSettings,
    #[serde(default)]
    pub evaluation: EvaluationSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            scaler_method: "unit_interval".into(),
            corpus: CorpusConfig {
                synthetic: Some(SyntheticSpec::desk(10, 8, 64, 25)),
                train_path: None,
                test_path: None,
            },
            diffusion: DiffusionSettings::default(),
            seqmodel: SeqSettings::default(),
            segmentation: SegmentationSettings::default(),
            evaluation: EvaluationSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let config: PipelineConfig = serde_json::from_str(&body)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Check every numeric bound and that referenced paths exist, before any
    /// training starts.
    pub fn validate(&self) -> Result<()> {
        crate::dataset::ScalerMethod::parse(&self.scaler_method)?;
        match (&self.corpus.synthetic, &self.corpus.train_path, &self.corpus.test_path) {
            (Some(spec), None, None) => spec.validate()?,
            (None, Some(train), Some(test)) => {
                for p in [train, test] {
                    if !Path::new(p).join("manifest.json").is_file() {
                        return Err(Error::Config(format!("corpus bundle not found at '{p}'")));
                    }
                }
            }
            _ => {
                return Err(Error::Config(
                    "corpus must specify either `synthetic` or both `train_path` and `test_path`".into(),
                ))
            }
        }
        let d = &self.diffusion;
        if d.steps == 0 || !(0.0 < d.beta_min && d.beta_min <= d.beta_max && d.beta_max < 1.0) {
            return Err(Error::Config("invalid diffusion schedule bounds".into()));
        }
        if d.hidden == 0 || d.epochs == 0 || d.batch_size == 0 || d.learning_rate <= 0.0 {
            return Err(Error::Config("invalid diffusion training settings".into()));
        }
        let s = &self.seqmodel;
        if s.windows.is_empty() || s.windows.iter().any(|&w| w == 0) {
            return Err(Error::Config("seqmodel windows must be non-empty positive".into()));
        }
        if s.heads == 0 || s.width % s.heads != 0 || s.depth == 0 || s.ffn_mult == 0 {
            return Err(Error::Config("invalid seqmodel architecture".into()));
        }
        if s.batch_size == 0 || s.epoch_multiplier <= 0.0 || s.noise_std < 0.0 {
            return Err(Error::Config("invalid seqmodel training settings".into()));
        }
        if self.segmentation.degree == 0 {
            return Err(Error::Config("segmentation degree must be positive".into()));
        }
        if self.segmentation.weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::Config("segmentation weights must be positive".into()));
        }
        let e = &self.evaluation;
        if e.fid_gen_per_class < 2 || e.fid_repetitions == 0 || e.gen_per_class == 0 {
            return Err(Error::Config("invalid evaluation sample counts".into()));
        }
        if !(0.0 < e.subsample_fraction && e.subsample_fraction <= 1.0) {
            return Err(Error::Config("subsample_fraction must lie in (0, 1]".into()));
        }
        if e.classifier_seeds.is_empty() {
            return Err(Error::Config("need at least one classifier seed".into()));
        }
        if e.classifier_stride == 0
            || e.classifier_hidden == 0
            || e.classifier_epochs == 0
            || e.classifier_batch_size == 0
            || e.classifier_learning_rate <= 0.0
        {
            return Err(Error::Config("invalid classifier settings".into()));
        }
        Ok(())
    }

    pub fn classifier_config(&self) -> crate::evaluation::ClassifierConfig {
        crate::evaluation::ClassifierConfig {
            stride: self.evaluation.classifier_stride,
            hidden: self.evaluation.classifier_hidden,
            epochs: self.evaluation.classifier_epochs,
            batch_size: self.evaluation.classifier_batch_size,
            learning_rate: self.evaluation.classifier_learning_rate,
        }
    }

    /// Stable hash of the canonical serialized form.
    pub fn hash(&self) -> String {
        let body = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(body.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn missing_corpus_path_fails_validation() {
        let mut config = PipelineConfig::default();
        config.corpus.synthetic = None;
        config.corpus.train_path = Some("/definitely/not/here".into());
        config.corpus.test_path = Some("/also/not/here".into());
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn corpus_source_must_be_exclusive() {
        let mut config = PipelineConfig::default();
        config.corpus.train_path = Some("x".into());
        assert!(config.validate().is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.seed = 43;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), PipelineConfig::default().hash());
    }

    #[test]
    fn roundtrip_through_json() {
        let a = PipelineConfig::default();
        let body = serde_json::to_string_pretty(&a).unwrap();
        let b: PipelineConfig = serde_json::from_str(&body).unwrap();
        assert_eq!(a.hash(), b.hash());
    }
}
