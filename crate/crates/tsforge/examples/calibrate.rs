//! End-to-end dry run of the benchmark: Table-1 arm ordering, uplift and
//! similarity-probe directions, with timings. Used to tune defaults.

use std::time::Instant;

use tsforge::dataset::{generate_synthetic, Scaler, ScalerMethod, SyntheticSpec};
use tsforge::diffusion::{sample_first_steps, train_diffusion, DiffusionConfig};
use tsforge::evaluation::{
    run_table1_matrix, run_uplift_experiment, traditional_augment, ClassifierConfig,
};
use tsforge::netcore::{derive_seed, Tensor};
use tsforge::segloss::{build_segmentation, DEFAULT_WEIGHTS};
use tsforge::seqmodel::{alternating_train, generate_batch, SeqModel, SeqModelConfig};

fn main() {
    let t_total = Instant::now();
    let seed = 42u64;
    let spec = SyntheticSpec::desk(10, 8, 64, 25);
    let train = generate_synthetic(&spec, derive_seed(seed, "train-corpus")).unwrap();
    let test = generate_synthetic(&spec, derive_seed(seed, "test-corpus")).unwrap();
    println!("corpus: train {} test {}", train.len(), test.len());

    // ---- Table 1 ----
    let t0 = Instant::now();
    let proto = DiffusionConfig::desk(8, 10);
    let table1 = run_table1_matrix(&train, &proto, 100, 20, 0.8, derive_seed(seed, "table1")).unwrap();
    println!("table1 in {:.0}s", t0.elapsed().as_secs_f64());
    for arm in &table1.arms {
        println!("  {}+{} -> {:.4}", arm.scaling, arm.target, arm.avg_fid);
    }
    println!("  real_split baseline {:.4}", table1.real_split_fid);
    let best = table1
        .arms
        .iter()
        .min_by(|a, b| a.avg_fid.partial_cmp(&b.avg_fid).unwrap())
        .unwrap();
    println!(
        "  BEST = {}+{} (want unit_interval+predict_vector); baseline<best_fid: {}",
        best.scaling,
        best.target,
        table1.real_split_fid < best.avg_fid
    );

    // ---- seq models + generation ----
    let scaler = Scaler::fit(&train, ScalerMethod::UnitInterval).unwrap();
    let scaled = scaler.apply(&train).unwrap();
    let seg = build_segmentation(&scaled, 20, DEFAULT_WEIGHTS).unwrap();
    println!("segmentation boundaries {:?}", seg.segmentation.boundaries);

    // diffusion firsts for generation (the augmentation pipeline's source)
    let mut firsts_scaled = train.first_frames();
    scaler.apply_frames(&mut firsts_scaled, 8).unwrap();
    let x0 = Tensor::new(vec![train.len(), 8], firsts_scaled).unwrap();
    let (denoiser, traj) =
        train_diffusion(&x0, train.labels(), proto.clone(), derive_seed(seed, "diffusion")).unwrap();
    println!(
        "diffusion loss {:.5} -> {:.5} (ratio {:.3})",
        traj[0],
        traj.last().unwrap(),
        traj.last().unwrap() / traj[0]
    );

    let gen_per_class = 25usize;
    let mut gen_sets = Vec::new();
    let windows = [1usize, 3, 5];
    let handles: Vec<_> = windows
        .iter()
        .map(|&w| {
            let scaled = scaled.clone();
            let segc = seg.segmentation.clone();
            std::thread::spawn(move || {
                let t = Instant::now();
                let cfg = SeqModelConfig::desk(64, 8, 10, w);
                let mut model = SeqModel::init(cfg, derive_seed(seed, &format!("seq-w{w}"))).unwrap();
                let log =
                    alternating_train(&mut model, &scaled, &segc, derive_seed(seed, &format!("train-w{w}")))
                        .unwrap();
                (w, model, log, t.elapsed().as_secs_f64())
            })
        })
        .collect();
    let mut models = Vec::new();
    for h in handles {
        let (w, model, log, secs) = h.join().unwrap();
        println!(
            "seq w={w}: {} epochs in {:.0}s, final weighted {:.4} (phase1 end {:.4})",
            log.len(),
            secs,
            log.last().unwrap().loss,
            log[log.iter().filter(|e| e.phase == 1).count() - 1].loss
        );
        models.push((w, model));
    }

    for (w, model) in &models {
        let t1 = Instant::now();
        let mut firsts = Vec::new();
        let mut labels = Vec::new();
        for class in 0..10usize {
            let f = sample_first_steps(
                &denoiser,
                &denoiser.schedule,
                class,
                gen_per_class,
                8,
                derive_seed(seed, &format!("first-{class}-w{w}")),
                Some((0.0, 1.0)),
            )
            .unwrap();
            firsts.extend_from_slice(f.data());
            labels.extend(std::iter::repeat(class).take(gen_per_class));
        }
        let firsts = Tensor::new(vec![labels.len(), 8], firsts).unwrap();
        let gen_scaled = generate_batch(model, &firsts, &labels, 64).unwrap();
        // to corpus in original range
        let mut data = gen_scaled.data().to_vec();
        // invert per channel
        let flat_rows = labels.len() * 64;
        scaler.invert_frames(&mut data, 8).unwrap();
        let _ = flat_rows;
        let corpus = tsforge::dataset::SequenceCorpus::new(
            64,
            8,
            10,
            data,
            labels.clone(),
            vec![64; labels.len()],
        )
        .unwrap();
        println!("generated w={w} in {:.0}s", t1.elapsed().as_secs_f64());
        gen_sets.push((format!("w{w}"), corpus));
    }

    // ---- uplift ----
    let t2 = Instant::now();
    let trad_scaled = traditional_augment(&scaled, gen_per_class, derive_seed(seed, "trad")).unwrap();
    let traditional = scaler.invert(&trad_scaled).unwrap();
    let report = run_uplift_experiment(
        &train,
        &test,
        &gen_sets,
        &traditional,
        &ClassifierConfig::default(),
        &[0, 1, 2],
        derive_seed(seed, "uplift"),
    )
    .unwrap();
    println!("uplift in {:.0}s", t2.elapsed().as_secs_f64());
    for row in &report.rows {
        println!(
            "  {:>16}: mean {:.3} (per-seed {:?}) d_base {:+.3} d_trad {:+.3}",
            row.name, row.mean_accuracy, row.per_seed_accuracy, row.delta_vs_baseline, row.delta_vs_traditional
        );
    }
    for sim in &report.similarity {
        println!("  similarity {}: {:.3} (chance {:.3})", sim.name, sim.accuracy, report.chance_rate);
    }
    println!("TOTAL {:.0}s", t_total.elapsed().as_secs_f64());
}
