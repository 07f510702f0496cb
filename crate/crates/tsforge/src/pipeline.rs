//! Stage-by-stage pipeline orchestration. Every stage reads its inputs from
//! the artifact directory and writes its outputs back, so deleting
//! downstream artifacts and rerunning reproduces them bit-identically.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::dataset::{
    generate_synthetic, load_corpus, save_corpus, Scaler, ScalerMethod, SequenceCorpus,
};
use crate::diffusion::{
    self, sample_first_steps, train_diffusion, DiffusionConfig, PredictionTarget,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    run_table1_matrix, run_uplift_experiment, traditional_augment, Table1Report, UpliftReport,
};
use crate::netcore::{derive_seed, Tensor};
use crate::segloss::{
    average_feature_curve, build_segmentation, difference_curve, SegmentationFile,
};
use crate::seqmodel::{self, alternating_train, generate_batch, EpochLog, SeqModel, SeqModelConfig};

#[derive(Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub seed: u64,
    pub table1: Table1Report,
    pub uplift: UpliftReport,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialize {}: {e}", path.display())))?;
    fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&body).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Write an `(n, d)` frame matrix as one row of 9-significant-digit values
/// per sample.
pub fn write_frames_csv(path: &Path, frames: &Tensor) -> Result<()> {
    let (n, d) = frames.dims2()?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    let mut out = String::new();
    for i in 0..n {
        for j in 0..d {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{:.8e}", frames.data()[i * d + j]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_frames_csv(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut data = Vec::new();
    let mut d = 0usize;
    let mut rows = 0usize;
    for (row, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if row == 0 {
            d = fields.len();
        } else if fields.len() != d {
            return Err(Error::Parse {
                path: path.display().to_string(),
                row: row + 1,
                field: fields.len(),
                msg: format!("expected {d} fields"),
            });
        }
        for (k, raw) in fields.iter().enumerate() {
            let v: f64 = raw.parse().map_err(|e| Error::Parse {
                path: path.display().to_string(),
                row: row + 1,
                field: k + 1,
                msg: format!("bad value '{raw}': {e}"),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            row: 0,
            field: 0,
            msg: "empty frame file".into(),
        });
    }
    Tensor::new(vec![rows, d], data)
}

pub struct ArtifactPaths {
    pub root: PathBuf,
}

impl ArtifactPaths {
    pub fn new(root: &Path) -> Self {
        ArtifactPaths {
            root: root.to_path_buf(),
        }
    }

    pub fn train_bundle(&self) -> PathBuf {
        self.root.join("corpus/train")
    }

    pub fn test_bundle(&self) -> PathBuf {
        self.root.join("corpus/test")
    }

    pub fn seg_file(&self) -> PathBuf {
        self.root.join("seg/seg.json")
    }

    pub fn diffusion_dir(&self) -> PathBuf {
        self.root.join("diffusion/model")
    }

    pub fn diffusion_loss_log(&self) -> PathBuf {
        self.root.join("diffusion/loss_log.csv")
    }

    pub fn firsts_file(&self, class: usize) -> PathBuf {
        self.root.join(format!("firsts/class_{class}.csv"))
    }

    pub fn seq_dir(&self, window: usize) -> PathBuf {
        self.root.join(format!("seqmodel/w{window}"))
    }

    pub fn gen_bundle(&self, window: usize) -> PathBuf {
        self.root.join(format!("gen/w{window}"))
    }

    pub fn traditional_bundle(&self) -> PathBuf {
        self.root.join("traditional")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
}

fn load_train(paths: &ArtifactPaths) -> Result<(SequenceCorpus, Scaler)> {
    let (corpus, scaler) = load_corpus(&paths.train_bundle())?;
    let scaler = scaler.ok_or_else(|| {
        Error::Config(format!(
            "train bundle at {} carries no scaler state (corpus stage incomplete)",
            paths.train_bundle().display()
        ))
    })?;
    Ok((corpus, scaler))
}

/// Synthesize (or ingest) the train and test corpora, fit the scaler on
/// the training corpus and persist both bundles. Synthetic train and test
/// sets are independent draws, so their simulated subjects differ.
pub fn stage_corpus(config: &PipelineConfig, paths: &ArtifactPaths, seed: u64) -> Result<()> {
    let method = ScalerMethod::parse(&config.scaler_method)?;
    let (train, test) = match (&config.corpus.synthetic, &config.corpus.train_path) {
        (Some(spec), _) => {
            let train = generate_synthetic(spec, derive_seed(seed, "train-corpus"))?;
            let test = generate_synthetic(spec, derive_seed(seed, "test-corpus"))?;
            (train, test)
        }
        (None, Some(train_path)) => {
            let (train, _) = load_corpus(Path::new(train_path))?;
            let test_path = config.corpus.test_path.as_ref().expect("validated");
            let (test, _) = load_corpus(Path::new(test_path))?;
            (train, test)
        }
        _ => return Err(Error::Config("no corpus source".into())),
    };
    let scaler = Scaler::fit(&train, method)?;
    save_corpus(&train, Some(&scaler), &paths.train_bundle())?;
    save_corpus(&test, None, &paths.test_bundle())?;
    Ok(())
}

/// Average curve, differences, polynomial fit and quartile boundaries on the
/// scaled training corpus.
pub fn stage_segment(config: &PipelineConfig, paths: &ArtifactPaths) -> Result<()> {
    let (train, scaler) = load_train(paths)?;
    let scaled = scaler.apply(&train)?;
    let arts = build_segmentation(&scaled, config.segmentation.degree, config.segmentation.weights)?;
    let file = SegmentationFile {
        t_len: train.t_len(),
        degree: config.segmentation.degree,
        boundaries: arts.segmentation.boundaries,
        weights: arts.segmentation.weights,
        quartiles: arts.segmentation.quartiles,
        polynomial: arts.fitted,
    };
    write_json(&paths.seg_file(), &file)
}

pub fn load_segmentation(paths: &ArtifactPaths) -> Result<crate::segloss::IntervalSegmentation> {
    let file: SegmentationFile = read_json(&paths.seg_file())?;
    crate::segloss::IntervalSegmentation::from_boundaries(
        file.boundaries,
        file.weights,
        file.quartiles,
        file.t_len,
    )
}

pub fn stage_diffusion(config: &PipelineConfig, paths: &ArtifactPaths, seed: u64) -> Result<()> {
    let (train, scaler) = load_train(paths)?;
    let d = train.channels();
    let mut firsts = train.first_frames();
    scaler.apply_frames(&mut firsts, d)?;
    let x0 = Tensor::new(vec![train.len(), d], firsts)?;
    let dconf = DiffusionConfig {
        feature_dim: d,
        class_count: train.class_count(),
        hidden: config.diffusion.hidden,
        steps: config.diffusion.steps,
        beta_min: config.diffusion.beta_min,
        beta_max: config.diffusion.beta_max,
        target: PredictionTarget::CleanVector,
        epochs: config.diffusion.epochs,
        batch_size: config.diffusion.batch_size,
        learning_rate: config.diffusion.learning_rate,
    };
    let (model, trajectory) = train_diffusion(&x0, train.labels(), dconf, seed)?;
    diffusion::save_model(&model, &paths.diffusion_dir())?;
    write_json(&paths.diffusion_dir().join("scaler.json"), &scaler)?;
    let mut log = String::from("epoch,loss\n");
    for (epoch, loss) in trajectory.iter().enumerate() {
        log.push_str(&format!("{epoch},{loss}\n"));
    }
    fs::write(&paths.diffusion_loss_log(), log)
        .map_err(|e| Error::io(paths.diffusion_loss_log().display().to_string(), e))?;
    Ok(())
}

/// Sample scaled first frames per class from the trained denoiser.
pub fn stage_firsts(config: &PipelineConfig, paths: &ArtifactPaths, seed: u64) -> Result<()> {
    let model = diffusion::load_model(&paths.diffusion_dir())?;
    let scaler: Scaler = read_json(&paths.diffusion_dir().join("scaler.json"))?;
    for class in 0..model.config.class_count {
        let frames = sample_first_steps(
            &model,
            &model.schedule,
            class,
            config.evaluation.gen_per_class,
            model.config.feature_dim,
            derive_seed(seed, &format!("firsts-{class}")),
            scaler.scaled_range(),
        )?;
        write_frames_csv(&paths.firsts_file(class), &frames)?;
    }
    Ok(())
}

pub fn stage_seq(config: &PipelineConfig, paths: &ArtifactPaths, window: usize, seed: u64) -> Result<()> {
    let (train, scaler) = load_train(paths)?;
    let scaled = scaler.apply(&train)?;
    let segmentation = load_segmentation(paths)?;
    let s = &config.seqmodel;
    let mconf = SeqModelConfig {
        width: s.width,
        heads: s.heads,
        depth: s.depth,
        ffn_mult: s.ffn_mult,
        window,
        t_len: train.t_len(),
        feature_dim: train.channels(),
        class_count: train.class_count(),
        noise_std: s.noise_std,
        batch_size: s.batch_size,
        epoch_multiplier: s.epoch_multiplier,
        phase_lrs: s.phase_lrs,
    };
    let mut model = SeqModel::init(mconf, derive_seed(seed, "init"))?;
    let log = alternating_train(&mut model, &scaled, &segmentation, derive_seed(seed, "train"))?;
    let dir = paths.seq_dir(window);
    seqmodel::save_model(&model, &dir)?;
    write_json(&dir.join("scaler.json"), &scaler)?;
    write_loss_log(&dir.join("loss_log.csv"), &log)?;
    Ok(())
}

fn write_loss_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut out = String::from("epoch,phase,loss_kind,learning_rate,loss,i1,i2,i3,i4\n");
    for e in log {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            e.epoch,
            e.phase,
            e.loss_kind,
            e.learning_rate,
            e.loss,
            e.per_interval[0],
            e.per_interval[1],
            e.per_interval[2],
            e.per_interval[3]
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Extrapolate the sampled first frames into full sequences and emit a
/// corpus bundle in the original data range.
pub fn stage_generate(paths: &ArtifactPaths, window: usize) -> Result<()> {
    let model = seqmodel::load_model(&paths.seq_dir(window))?;
    let scaler: Scaler = read_json(&paths.seq_dir(window).join("scaler.json"))?;
    let classes = model.config.class_count;
    let d = model.config.feature_dim;
    let mut firsts = Vec::new();
    let mut labels = Vec::new();
    for class in 0..classes {
        let path = paths.firsts_file(class);
        if !path.is_file() {
            return Err(Error::Config(format!(
                "first-frame stage artifacts missing: {}",
                path.display()
            )));
        }
        let frames = read_frames_csv(&path)?;
        let (n, fd) = frames.dims2()?;
        if fd != d {
            return Err(Error::Shape(format!(
                "first frames have {fd} channels, model expects {d}"
            )));
        }
        firsts.extend_from_slice(frames.data());
        labels.extend(std::iter::repeat(class).take(n));
    }
    let firsts = Tensor::new(vec![labels.len(), d], firsts)?;
    let generated = generate_batch(&model, &firsts, &labels, model.config.t_len)?;
    let mut data = generated.into_data();
    scaler.invert_frames(&mut data, d)?;
    let corpus = SequenceCorpus::new(
        model.config.t_len,
        d,
        classes,
        data,
        labels.clone(),
        vec![model.config.t_len; labels.len()],
    )?;
    save_corpus(&corpus, None, &paths.gen_bundle(window))
}

pub fn stage_traditional(config: &PipelineConfig, paths: &ArtifactPaths, seed: u64) -> Result<()> {
    let (train, scaler) = load_train(paths)?;
    let scaled = scaler.apply(&train)?;
    let augmented = traditional_augment(&scaled, config.evaluation.gen_per_class, seed)?;
    let restored = scaler.invert(&augmented)?;
    save_corpus(&restored, None, &paths.traditional_bundle())
}

pub fn stage_table1(config: &PipelineConfig, paths: &ArtifactPaths, seed: u64) -> Result<Table1Report> {
    let (train, _) = load_train(paths)?;
    let proto = DiffusionConfig {
        feature_dim: train.channels(),
        class_count: train.class_count(),
        hidden: config.diffusion.hidden,
        steps: config.diffusion.steps,
        beta_min: config.diffusion.beta_min,
        beta_max: config.diffusion.beta_max,
        target: PredictionTarget::CleanVector,
        epochs: config.diffusion.epochs,
        batch_size: config.diffusion.batch_size,
        learning_rate: config.diffusion.learning_rate,
    };
    run_table1_matrix(
        &train,
        &proto,
        config.evaluation.fid_gen_per_class,
        config.evaluation.fid_repetitions,
        config.evaluation.subsample_fraction,
        seed,
    )
}

pub fn stage_uplift(config: &PipelineConfig, paths: &ArtifactPaths, seed: u64) -> Result<UpliftReport> {
    let (train, _) = load_train(paths)?;
    let (test, _) = load_corpus(&paths.test_bundle())?;
    let (traditional, _) = load_corpus(&paths.traditional_bundle())?;
    let mut gen_sets = Vec::new();
    for &w in &config.seqmodel.windows {
        let (set, _) = load_corpus(&paths.gen_bundle(w))?;
        gen_sets.push((format!("w{w}"), set));
    }
    run_uplift_experiment(
        &train,
        &test,
        &gen_sets,
        &traditional,
        &config.classifier_config(),
        &config.evaluation.classifier_seeds,
        seed,
    )
}

/// Execute every stage in flowchart order, recording per-stage seeds.
/// Failures leave partial artifacts plus a `FAILED` marker.
pub fn run_pipeline(config: &PipelineConfig, out: &Path) -> Result<()> {
    config.validate()?;
    let result = run_stages(config, out);
    if let Err(e) = &result {
        let _ = fs::write(out.join("FAILED"), format!("{e}\n"));
    }
    result
}

fn run_stages(config: &PipelineConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let failed = out.join("FAILED");
    if failed.exists() {
        fs::remove_file(&failed).map_err(|e| Error::io(failed.display().to_string(), e))?;
    }
    let paths = ArtifactPaths::new(out);
    write_json(&out.join("config.json"), config)?;
    let mut stages = Vec::new();
    let mut record = |name: &str| {
        let seed = derive_seed(config.seed, name);
        stages.push(StageRecord {
            name: name.to_string(),
            seed,
        });
        seed
    };

    let seed = record("corpus");
    stage_corpus(config, &paths, seed)?;
    record("segment");
    stage_segment(config, &paths)?;
    let seed = record("diffusion");
    stage_diffusion(config, &paths, seed)?;
    let seed = record("firsts");
    stage_firsts(config, &paths, seed)?;

    let windows = config.seqmodel.windows.clone();
    let seq_seeds: Vec<u64> = windows
        .iter()
        .map(|w| record(&format!("seq-w{w}")))
        .collect();
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for (&w, &s) in windows.iter().zip(&seq_seeds) {
            let paths = ArtifactPaths::new(out);
            handles.push(scope.spawn(move || stage_seq(config, &paths, w, s)));
        }
        for h in handles {
            h.join().expect("seq training thread panicked")?;
        }
        Ok(())
    })?;
    for &w in &windows {
        record(&format!("generate-w{w}"));
        stage_generate(&paths, w)?;
    }
    let seed = record("traditional");
    stage_traditional(config, &paths, seed)?;
    let seed = record("table1");
    let table1 = stage_table1(config, &paths, seed)?;
    let seed = record("uplift");
    let uplift = stage_uplift(config, &paths, seed)?;

    write_json(
        &paths.report(),
        &RunReport {
            config_hash: config.hash(),
            seed: config.seed,
            table1,
            uplift,
        },
    )?;
    write_json(
        &out.join("manifest.json"),
        &RunManifest {
            config_hash: config.hash(),
            seed: config.seed,
            stages,
        },
    )?;
    Ok(())
}

/// Plot-ready CSV exports of the segmentation curves and training losses.
pub fn emit_curves(artifacts: &Path, out: &Path) -> Result<()> {
    let paths = ArtifactPaths::new(artifacts);
    if !paths.train_bundle().join("manifest.json").is_file() {
        return Err(Error::Config(format!(
            "corpus stage artifacts missing: {}",
            paths.train_bundle().display()
        )));
    }
    if !paths.seg_file().is_file() {
        return Err(Error::Config(format!(
            "segment stage artifacts missing: {}",
            paths.seg_file().display()
        )));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let (train, scaler) = load_train(&paths)?;
    let scaled = scaler.apply(&train)?;
    let average = average_feature_curve(&scaled)?;
    let diff = difference_curve(&average)?;
    let seg: SegmentationFile = read_json(&paths.seg_file())?;

    let mut avg_csv = String::from("t,average\n");
    for (i, v) in average.iter().enumerate() {
        avg_csv.push_str(&format!("{},{v}\n", i + 1));
    }
    fs::write(out.join("average_curve.csv"), avg_csv)
        .map_err(|e| Error::io(out.display().to_string(), e))?;

    let mut diff_csv = String::from("t,delta,fitted\n");
    for (i, v) in diff.values.iter().enumerate() {
        let t = i + 2;
        diff_csv.push_str(&format!("{t},{v},{}\n", seg.polynomial.eval(t as f64)));
    }
    fs::write(out.join("difference_curve.csv"), diff_csv)
        .map_err(|e| Error::io(out.display().to_string(), e))?;

    let mut bounds_csv = String::from("kind,index,value\n");
    for (i, b) in seg.boundaries.iter().enumerate() {
        bounds_csv.push_str(&format!("boundary,{},{b}\n", i + 1));
    }
    for (i, w) in seg.weights.iter().enumerate() {
        bounds_csv.push_str(&format!("weight,{},{w}\n", i + 1));
    }
    fs::write(out.join("boundaries.csv"), bounds_csv)
        .map_err(|e| Error::io(out.display().to_string(), e))?;

    if paths.diffusion_loss_log().is_file() {
        fs::copy(paths.diffusion_loss_log(), out.join("losses_diffusion.csv"))
            .map_err(|e| Error::io(out.display().to_string(), e))?;
    }
    let seq_root = artifacts.join("seqmodel");
    if seq_root.is_dir() {
        let entries = fs::read_dir(&seq_root).map_err(|e| Error::io(seq_root.display().to_string(), e))?;
        for entry in entries.flatten() {
            let log = entry.path().join("loss_log.csv");
            if log.is_file() {
                let name = format!("losses_seq_{}.csv", entry.file_name().to_string_lossy());
                fs::copy(&log, out.join(name)).map_err(|e| Error::io(log.display().to_string(), e))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let t = Tensor::new(vec![3, 2], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        write_frames_csv(&path, &t).unwrap();
        let back = read_frames_csv(&path).unwrap();
        assert_eq!(back.shape(), &[3, 2]);
        for (a, b) in t.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn emit_curves_names_missing_stage() {
        let dir = tempfile::tempdir().unwrap();
        let err = emit_curves(dir.path(), &dir.path().join("curves")).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("corpus stage"), "{msg}");
    }
}
