//! Command-line interface: one subcommand per pipeline stage plus the
//! end-to-end `run`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::PipelineConfig;
use crate::dataset::{
    generate_synthetic, load_corpus, save_corpus, Scaler, ScalerMethod, SequenceCorpus,
    SyntheticSpec,
};
use crate::diffusion::{self, sample_first_steps, train_diffusion, DiffusionConfig, PredictionTarget};
use crate::error::{Error, Result};
use crate::evaluation::{avg_fid_over_classes, class_first_frames, run_uplift_experiment, traditional_augment};
use crate::netcore::{derive_seed, Tensor};
use crate::pipeline::{self, read_frames_csv, run_pipeline, write_frames_csv};
use crate::segloss::{build_segmentation, SegmentationFile, DEFAULT_WEIGHTS};
use crate::seqmodel::{self, alternating_train, generate_batch, SeqModel, SeqModelConfig};

/// Synthesize, extrapolate and evaluate time-series training data.
#[derive(Debug, Parser)]
#[command(name = "tsforge", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Seed for all randomness; falls back to TSFORGE_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus bundle (optionally split per class).
    Synth(SynthArgs),
    /// Compute the interval segmentation of a corpus.
    Segment(SegmentArgs),
    /// Train the first-frame denoiser.
    TrainDiffusion(TrainDiffusionArgs),
    /// Sample first-time-step vectors from a trained denoiser.
    SampleFirst(SampleFirstArgs),
    /// Train the masked encoder-decoder extrapolator.
    TrainSeq(TrainSeqArgs),
    /// Extrapolate full sequences from first frames.
    Generate(GenerateArgs),
    /// Quality evaluation.
    #[command(subcommand)]
    Evaluate(EvaluateCommand),
    /// Run the full pipeline from a config file.
    Run(RunArgs),
    /// Export plot-ready CSVs from run artifacts.
    EmitCurves(EmitCurvesArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = 64)]
    pub length: usize,
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Scaler fitted on the (training) corpus and stored in its manifest.
    #[arg(long, default_value = "unit_interval")]
    pub scaler: String,
    #[arg(long)]
    pub out: PathBuf,
    /// When set, also generate an independent test corpus here.
    #[arg(long)]
    pub test_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub degree: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-step average, difference and fitted values.
    #[arg(long)]
    pub emit_curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainDiffusionArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[arg(long, default_value_t = 400)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 0.3)]
    pub beta_max: f64,
    /// `vector` (clean prediction, sigmoid head) or `noise`.
    #[arg(long, default_value = "vector")]
    pub target: String,
    /// Scaler when the bundle carries none.
    #[arg(long, default_value = "unit_interval")]
    pub scaler: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleFirstArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub class: usize,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainSeqArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    /// JSON file with pipeline-style `seqmodel` settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Precomputed seg.json; computed from the corpus when absent.
    #[arg(long)]
    pub seg: Option<PathBuf>,
    #[arg(long, default_value = "unit_interval")]
    pub scaler: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub seq_model: PathBuf,
    /// CSV of scaled first frames, one row per sample.
    #[arg(long)]
    pub first: PathBuf,
    #[arg(long)]
    pub class: usize,
    #[arg(long)]
    pub length: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum EvaluateCommand {
    /// Average per-class FID between two corpora's first frames.
    Fid(FidArgs),
    /// The six-arm scaling x prediction-target FID matrix.
    Table1(Table1Args),
    /// Classifier-accuracy uplift and the similarity probe.
    Uplift(UpliftArgs),
}

#[derive(Debug, Args)]
pub struct FidArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub gen: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.8)]
    pub subsample: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Table1Args {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub gen_per_class: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 400)]
    pub epochs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct UpliftArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Generated corpus bundles, labeled by directory basename.
    #[arg(long, required = true, num_args = 1..)]
    pub gen: Vec<PathBuf>,
    /// Samples per class for the internally built traditional baseline.
    #[arg(long, default_value_t = 25)]
    pub traditional_per_class: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub classifier_seeds: Vec<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmitCurvesArgs {
    /// Artifact directory of a previous `run`.
    #[arg(long)]
    pub artifacts: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("TSFORGE_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(0)
}

fn load_scaled_corpus(path: &Path, fallback: &str) -> Result<(SequenceCorpus, Scaler)> {
    let (corpus, scaler) = load_corpus(path)?;
    let scaler = match scaler {
        Some(s) => s,
        None => Scaler::fit(&corpus, ScalerMethod::parse(fallback)?)?,
    };
    Ok((corpus, scaler))
}

pub fn execute(cli: Cli) -> Result<()> {
    let seed = resolve_seed(cli.seed);
    match cli.command {
        Command::Synth(args) => synth(args, seed),
        Command::Segment(args) => segment(args),
        Command::TrainDiffusion(args) => train_diffusion_cmd(args, seed),
        Command::SampleFirst(args) => sample_first(args, seed),
        Command::TrainSeq(args) => train_seq(args, seed),
        Command::Generate(args) => generate(args),
        Command::Evaluate(cmd) => evaluate(cmd, seed),
        Command::Run(args) => {
            let config = PipelineConfig::load(&args.config)?;
            run_pipeline(&config, &args.out)
        }
        Command::EmitCurves(args) => {
            let out = args
                .out
                .unwrap_or_else(|| args.artifacts.join("curves"));
            pipeline::emit_curves(&args.artifacts, &out)
        }
    }
}

fn synth(args: SynthArgs, seed: u64) -> Result<()> {
    let spec = SyntheticSpec {
        noise_amplitude: args.noise,
        ..SyntheticSpec::desk(args.classes, args.channels, args.length, args.per_class)
    };
    let method = ScalerMethod::parse(&args.scaler)?;
    match args.test_out {
        Some(test_out) => {
            let train = generate_synthetic(&spec, derive_seed(seed, "train-corpus"))?;
            let test = generate_synthetic(&spec, derive_seed(seed, "test-corpus"))?;
            let scaler = Scaler::fit(&train, method)?;
            save_corpus(&train, Some(&scaler), &args.out)?;
            save_corpus(&test, None, &test_out)?;
        }
        None => {
            let corpus = generate_synthetic(&spec, seed)?;
            let scaler = Scaler::fit(&corpus, method)?;
            save_corpus(&corpus, Some(&scaler), &args.out)?;
        }
    }
    Ok(())
}

fn segment(args: SegmentArgs) -> Result<()> {
    let (corpus, scaler) = load_scaled_corpus(&args.corpus, "unit_interval")?;
    let scaled = scaler.apply(&corpus)?;
    let arts = build_segmentation(&scaled, args.degree, DEFAULT_WEIGHTS)?;
    let file = SegmentationFile {
        t_len: corpus.t_len(),
        degree: args.degree,
        boundaries: arts.segmentation.boundaries,
        weights: arts.segmentation.weights,
        quartiles: arts.segmentation.quartiles,
        polynomial: arts.fitted,
    };
    write_json_file(&args.out, &file)?;
    if let Some(curves) = args.emit_curves {
        let mut csv = String::from("t,average,delta,fitted\n");
        for (i, avg) in arts.average.iter().enumerate() {
            let t = i + 1;
            if i == 0 {
                csv.push_str(&format!("{t},{avg},,\n"));
            } else {
                csv.push_str(&format!(
                    "{t},{avg},{},{}\n",
                    arts.difference.values[i - 1],
                    arts.fitted_grid[i - 1]
                ));
            }
        }
        std::fs::write(&curves, csv).map_err(|e| Error::io(curves.display().to_string(), e))?;
    }
    Ok(())
}

fn write_json_file<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialize {}: {e}", path.display())))?;
    std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

fn train_diffusion_cmd(args: TrainDiffusionArgs, seed: u64) -> Result<()> {
    let target = match args.target.as_str() {
        "vector" => PredictionTarget::CleanVector,
        "noise" => PredictionTarget::Noise,
        other => return Err(Error::Config(format!("unknown target '{other}'"))),
    };
    let (corpus, scaler) = load_scaled_corpus(&args.corpus, &args.scaler)?;
    let d = corpus.channels();
    let mut firsts = corpus.first_frames();
    scaler.apply_frames(&mut firsts, d)?;
    let x0 = Tensor::new(vec![corpus.len(), d], firsts)?;
    let config = DiffusionConfig {
        feature_dim: d,
        class_count: corpus.class_count(),
        hidden: args.hidden,
        steps: args.steps,
        beta_min: args.beta_min,
        beta_max: args.beta_max,
        target,
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
    };
    let (model, trajectory) = train_diffusion(&x0, corpus.labels(), config, seed)?;
    diffusion::save_model(&model, &args.out)?;
    write_json_file(&args.out.join("scaler.json"), &scaler)?;
    let mut log = String::from("epoch,loss\n");
    for (epoch, loss) in trajectory.iter().enumerate() {
        log.push_str(&format!("{epoch},{loss}\n"));
    }
    let log_path = args.out.join("loss_log.csv");
    std::fs::write(&log_path, log).map_err(|e| Error::io(log_path.display().to_string(), e))?;
    Ok(())
}

fn sample_first(args: SampleFirstArgs, seed: u64) -> Result<()> {
    let model = diffusion::load_model(&args.model)?;
    let scaler: Scaler = read_json_file(&args.model.join("scaler.json"))?;
    let frames = sample_first_steps(
        &model,
        &model.schedule,
        args.class,
        args.count,
        model.config.feature_dim,
        seed,
        scaler.scaled_range(),
    )?;
    write_frames_csv(&args.out, &frames)
}

fn read_json_file<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&body).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn train_seq(args: TrainSeqArgs, seed: u64) -> Result<()> {
    let (corpus, scaler) = load_scaled_corpus(&args.corpus, &args.scaler)?;
    let scaled = scaler.apply(&corpus)?;
    let settings = match args.config {
        Some(path) => {
            let config: PipelineConfig = read_json_file(&path)?;
            config.seqmodel
        }
        None => crate::config::SeqSettings::default(),
    };
    let segmentation = match args.seg {
        Some(path) => {
            let file: SegmentationFile = read_json_file(&path)?;
            crate::segloss::IntervalSegmentation::from_boundaries(
                file.boundaries,
                file.weights,
                file.quartiles,
                file.t_len,
            )?
        }
        None => build_segmentation(&scaled, 20, DEFAULT_WEIGHTS)?.segmentation,
    };
    let config = SeqModelConfig {
        width: settings.width,
        heads: settings.heads,
        depth: settings.depth,
        ffn_mult: settings.ffn_mult,
        window: args.window,
        t_len: corpus.t_len(),
        feature_dim: corpus.channels(),
        class_count: corpus.class_count(),
        noise_std: settings.noise_std,
        batch_size: settings.batch_size,
        epoch_multiplier: settings.epoch_multiplier,
        phase_lrs: settings.phase_lrs,
    };
    let mut model = SeqModel::init(config, derive_seed(seed, "init"))?;
    let log = alternating_train(&mut model, &scaled, &segmentation, derive_seed(seed, "train"))?;
    seqmodel::save_model(&model, &args.out)?;
    write_json_file(&args.out.join("scaler.json"), &scaler)?;
    let mut csv = String::from("epoch,phase,loss_kind,learning_rate,loss,i1,i2,i3,i4\n");
    for e in &log {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            e.epoch, e.phase, e.loss_kind, e.learning_rate, e.loss,
            e.per_interval[0], e.per_interval[1], e.per_interval[2], e.per_interval[3]
        ));
    }
    let log_path = args.out.join("loss_log.csv");
    std::fs::write(&log_path, csv).map_err(|e| Error::io(log_path.display().to_string(), e))?;
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let model = seqmodel::load_model(&args.seq_model)?;
    let scaler: Scaler = read_json_file(&args.seq_model.join("scaler.json"))?;
    if args.class >= model.config.class_count {
        return Err(Error::InvalidArgument(format!(
            "class {} outside [0, {})",
            args.class, model.config.class_count
        )));
    }
    let firsts = read_frames_csv(&args.first)?;
    let (n, _) = firsts.dims2()?;
    let labels = vec![args.class; n];
    let generated = generate_batch(&model, &firsts, &labels, args.length)?;
    let mut data = generated.into_data();
    scaler.invert_frames(&mut data, model.config.feature_dim)?;
    let corpus = SequenceCorpus::new(
        args.length,
        model.config.feature_dim,
        model.config.class_count,
        data,
        labels,
        vec![args.length; n],
    )?;
    save_corpus(&corpus, None, &args.out)
}

fn evaluate(cmd: EvaluateCommand, seed: u64) -> Result<()> {
    match cmd {
        EvaluateCommand::Fid(args) => {
            let (real, _) = load_corpus(&args.real)?;
            let (gen, _) = load_corpus(&args.gen)?;
            if real.class_count() != gen.class_count() {
                return Err(Error::Shape("class counts differ".into()));
            }
            let reals: Vec<Tensor> = (0..real.class_count())
                .map(|c| class_first_frames(&real, c))
                .collect::<Result<_>>()?;
            let gens: Vec<Tensor> = (0..gen.class_count())
                .map(|c| class_first_frames(&gen, c))
                .collect::<Result<_>>()?;
            let report = avg_fid_over_classes(&reals, &gens, args.reps, args.subsample, seed)?;
            match args.out {
                Some(path) => write_json_file(&path, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report).unwrap()),
            }
            Ok(())
        }
        EvaluateCommand::Table1(args) => {
            let (corpus, _) = load_corpus(&args.corpus)?;
            let proto = DiffusionConfig {
                epochs: args.epochs,
                ..DiffusionConfig::desk(corpus.channels(), corpus.class_count())
            };
            let report = crate::evaluation::run_table1_matrix(
                &corpus,
                &proto,
                args.gen_per_class,
                args.reps,
                0.8,
                seed,
            )?;
            write_json_file(&args.out, &report)
        }
        EvaluateCommand::Uplift(args) => {
            let (train, scaler) = load_scaled_corpus(&args.train, "unit_interval")?;
            let (test, _) = load_corpus(&args.test)?;
            let mut gen_sets = Vec::new();
            for path in &args.gen {
                let (set, _) = load_corpus(path)?;
                let name = path
                    .file_name()
                    .map(|s| s.to_string_lossy().to_string())
                    .unwrap_or_else(|| path.display().to_string());
                gen_sets.push((name, set));
            }
            let scaled = scaler.apply(&train)?;
            let augmented = traditional_augment(
                &scaled,
                args.traditional_per_class,
                derive_seed(seed, "traditional"),
            )?;
            let traditional = scaler.invert(&augmented)?;
            let report = run_uplift_experiment(
                &train,
                &test,
                &gen_sets,
                &traditional,
                &crate::evaluation::ClassifierConfig::default(),
                &args.classifier_seeds,
                derive_seed(seed, "uplift"),
            )?;
            write_json_file(&args.out, &report)
        }
    }
}
