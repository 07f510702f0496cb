//! Evaluation protocol: FID with repeated subsampling, the real-split
//! baseline, the six-arm scaling x prediction-target comparison,
//! traditional augmentation baselines, and classifier-accuracy uplift.

pub mod augment;
pub mod classifier;
pub mod fid;

pub use augment::traditional_augment;
pub use classifier::{evaluate_classifier, train_classifier, Classifier, ClassifierConfig, ClassifierEval};
pub use fid::{avg_fid_over_classes, class_first_frames, fid, real_split_fid, FidReport, FidStats};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Scaler, ScalerMethod, SequenceCorpus};
use crate::diffusion::{sample_first_steps, train_diffusion, DiffusionConfig, PredictionTarget};
use crate::error::{Error, Result};
use crate::netcore::{derive_seed, Tensor};

/// One scaling x prediction-target combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Arm {
    pub scaling: String,
    pub target: String,
    pub avg_fid: f64,
    pub fid_variance: f64,
    pub per_class_fid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Report {
    pub arms: Vec<Table1Arm>,
    pub real_split_fid: f64,
    pub real_count: usize,
    pub gen_per_class: usize,
    pub repetitions: usize,
    pub csv: String,
}

fn table1_csv(arms: &[Table1Arm], baseline: f64, real: usize, gen_per_class: usize, classes: usize) -> String {
    let mut out = String::from("method,denoising_steps,real_data,generated_data,avg_fid\n");
    for arm in arms {
        out.push_str(&format!(
            "{}+{},10,{real},{}x{classes} classes,{:.4}\n",
            arm.scaling, arm.target, gen_per_class, arm.avg_fid
        ));
    }
    out.push_str(&format!("real_split_baseline,-,{real},-,{baseline:.4}\n"));
    out
}

/// Train a denoiser under each of the six combinations, generate first
/// frames, restore them to the original data range, and score average FID
/// per arm alongside the real-split baseline.
pub fn run_table1_matrix(
    train: &SequenceCorpus,
    proto: &DiffusionConfig,
    gen_per_class: usize,
    repetitions: usize,
    subsample_fraction: f64,
    seed: u64,
) -> Result<Table1Report> {
    let methods = [
        ScalerMethod::UnitInterval,
        ScalerMethod::SignedUnit,
        ScalerMethod::ZScore,
    ];
    let targets = [PredictionTarget::CleanVector, PredictionTarget::Noise];
    let combos: Vec<(ScalerMethod, PredictionTarget)> = methods
        .iter()
        .flat_map(|&m| targets.iter().map(move |&t| (m, t)))
        .collect();

    let classes = train.class_count();
    let d = train.channels();
    let real_by_class: Vec<Tensor> = (0..classes)
        .map(|c| class_first_frames(train, c))
        .collect::<Result<_>>()?;

    let arms: Vec<Table1Arm> = combos
        .par_iter()
        .map(|&(method, target)| -> Result<Table1Arm> {
            let arm_name = format!("{}+{}", method.name(), target_name(target));
            let arm_seed = derive_seed(seed, &arm_name);
            let scaler = Scaler::fit(train, method)?;
            let mut firsts = train.first_frames();
            scaler.apply_frames(&mut firsts, d)?;
            let x0 = Tensor::new(vec![train.len(), d], firsts)?;
            let config = DiffusionConfig {
                feature_dim: d,
                class_count: classes,
                target,
                ..proto.clone()
            };
            let (model, _) = train_diffusion(&x0, train.labels(), config, arm_seed)?;
            // clean-vector arms clamp to the scaler's valid range; the
            // noise arms recover x0 algebraically with no bounding anywhere
            let clamp = match target {
                PredictionTarget::CleanVector => scaler.scaled_range(),
                PredictionTarget::Noise => None,
            };
            let mut gen_by_class = Vec::with_capacity(classes);
            for class in 0..classes {
                let mut gen = sample_first_steps(
                    &model,
                    &model.schedule,
                    class,
                    gen_per_class,
                    d,
                    derive_seed(arm_seed, &format!("sample-{class}")),
                    clamp,
                )?;
                scaler.invert_frames(gen.data_mut(), d)?;
                gen_by_class.push(gen);
            }
            let report = avg_fid_over_classes(
                &real_by_class,
                &gen_by_class,
                repetitions,
                subsample_fraction,
                derive_seed(arm_seed, "fid"),
            )?;
            Ok(Table1Arm {
                scaling: method.name().to_string(),
                target: target_name(target).to_string(),
                avg_fid: report.mean,
                fid_variance: report.variance,
                per_class_fid: report.per_class,
            })
        })
        .collect::<Result<_>>()?;

    let baseline = real_split_fid(train, derive_seed(seed, "real-split"))?;
    let csv = table1_csv(&arms, baseline, train.len(), gen_per_class, classes);
    Ok(Table1Report {
        arms,
        real_split_fid: baseline,
        real_count: train.len(),
        gen_per_class,
        repetitions,
        csv,
    })
}

fn target_name(t: PredictionTarget) -> &'static str {
    match t {
        PredictionTarget::CleanVector => "predict_vector",
        PredictionTarget::Noise => "predict_noise",
    }
}

/// One training-set composition in the uplift comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpliftRow {
    pub name: String,
    pub per_seed_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub delta_vs_baseline: f64,
    pub delta_vs_traditional: f64,
    pub confusion: Vec<Vec<usize>>,
}

/// Probe accuracy of generated data against its conditioning labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub name: String,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpliftReport {
    pub rows: Vec<UpliftRow>,
    pub similarity: Vec<SimilarityRow>,
    pub chance_rate: f64,
    pub classifier_seeds: Vec<u64>,
    pub uplift_csv: String,
    pub traditional_csv: String,
}

fn percent(v: f64) -> f64 {
    (v * 1000.0).round() / 10.0
}

/// Train classifiers on the plain, traditionally augmented and
/// model-augmented training sets, evaluate on the held-out test set, and
/// probe each generated set with a classifier trained on train and test
/// combined.
pub fn run_uplift_experiment(
    train: &SequenceCorpus,
    test: &SequenceCorpus,
    gen_sets: &[(String, SequenceCorpus)],
    traditional: &SequenceCorpus,
    clf_config: &ClassifierConfig,
    classifier_seeds: &[u64],
    seed: u64,
) -> Result<UpliftReport> {
    if classifier_seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one classifier seed".into()));
    }
    let mut compositions: Vec<(String, SequenceCorpus)> = vec![
        ("no_augmentation".to_string(), train.clone()),
        ("traditional".to_string(), train.merged_with(traditional)?),
    ];
    for (name, set) in gen_sets {
        compositions.push((name.clone(), train.merged_with(set)?));
    }

    let tasks: Vec<(usize, usize)> = (0..compositions.len())
        .flat_map(|r| (0..classifier_seeds.len()).map(move |s| (r, s)))
        .collect();
    let evals: Vec<(usize, usize, ClassifierEval)> = tasks
        .par_iter()
        .map(|&(r, s)| -> Result<(usize, usize, ClassifierEval)> {
            let (name, corpus) = &compositions[r];
            let clf_seed = derive_seed(classifier_seeds[s], name);
            let clf = train_classifier(corpus, clf_config.clone(), clf_seed)?;
            Ok((r, s, evaluate_classifier(&clf, test)?))
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<UpliftRow> = compositions
        .iter()
        .map(|(name, _)| UpliftRow {
            name: name.clone(),
            per_seed_accuracy: vec![0.0; classifier_seeds.len()],
            mean_accuracy: 0.0,
            delta_vs_baseline: 0.0,
            delta_vs_traditional: 0.0,
            confusion: Vec::new(),
        })
        .collect();
    for (r, s, eval) in evals {
        rows[r].per_seed_accuracy[s] = eval.accuracy;
        if s == 0 {
            rows[r].confusion = eval.confusion;
        }
    }
    for row in &mut rows {
        row.mean_accuracy =
            row.per_seed_accuracy.iter().sum::<f64>() / row.per_seed_accuracy.len() as f64;
    }
    let baseline = rows[0].mean_accuracy;
    let trad = rows[1].mean_accuracy;
    for row in &mut rows {
        row.delta_vs_baseline = row.mean_accuracy - baseline;
        row.delta_vs_traditional = row.mean_accuracy - trad;
    }

    // similarity probe: train on train + test, classify generated data
    let probe_corpus = train.merged_with(test)?;
    let probe = train_classifier(
        &probe_corpus,
        clf_config.clone(),
        derive_seed(seed, "similarity-probe"),
    )?;
    let similarity: Vec<SimilarityRow> = gen_sets
        .iter()
        .map(|(name, set)| -> Result<SimilarityRow> {
            let eval = evaluate_classifier(&probe, set)?;
            Ok(SimilarityRow {
                name: name.clone(),
                accuracy: eval.accuracy,
                confusion: eval.confusion,
            })
        })
        .collect::<Result<_>>()?;

    let mut uplift_csv = String::from("method,accuracy_pct,increase_pct\n");
    for row in &rows {
        uplift_csv.push_str(&format!(
            "{},{},{:+}\n",
            row.name,
            percent(row.mean_accuracy),
            percent(row.delta_vs_baseline)
        ));
    }
    let mut traditional_csv = String::from("method,accuracy_pct,increase_pct\n");
    for row in rows.iter().skip(1) {
        traditional_csv.push_str(&format!(
            "{},{},{:+}\n",
            row.name,
            percent(row.mean_accuracy),
            percent(row.delta_vs_traditional)
        ));
    }

    Ok(UpliftReport {
        rows,
        similarity,
        chance_rate: 1.0 / train.class_count() as f64,
        classifier_seeds: classifier_seeds.to_vec(),
        uplift_csv,
        traditional_csv,
    })
}
