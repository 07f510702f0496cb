use std::time::Instant;
use tsforge::dataset::{generate_synthetic, split_per_class, Scaler, ScalerMethod, SyntheticSpec};
use tsforge::segloss::{build_segmentation, DEFAULT_WEIGHTS};
use tsforge::seqmodel::{alternating_train, generate_batch, SeqModel, SeqModelConfig};
use tsforge::netcore::Tensor;

fn main() {
    let spec = SyntheticSpec::desk(10, 8, 64, 50);
    let full = generate_synthetic(&spec, 42).unwrap();
    let (train, _test) = split_per_class(&full, 0.5, 7).unwrap();
    let scaler = Scaler::fit(&train, ScalerMethod::UnitInterval).unwrap();
    let scaled = scaler.apply(&train).unwrap();
    let arts = build_segmentation(&scaled, 20, DEFAULT_WEIGHTS).unwrap();
    println!("train n={} boundaries={:?}", scaled.len(), arts.segmentation.boundaries);

    let mut cfg = SeqModelConfig::desk(64, 8, 10, 3);
    cfg.epoch_multiplier = 0.01; // (2,1,1) epochs for timing
    let mut model = SeqModel::init(cfg, 1).unwrap();
    let t0 = Instant::now();
    let log = alternating_train(&mut model, &scaled, &arts.segmentation, 5).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("4 epochs in {:.2}s -> {:.2}s/epoch; losses {:?}", dt, dt/4.0, log.iter().map(|e| e.loss).collect::<Vec<_>>());

    let firsts = Tensor::new(vec![20, 8], scaled.first_frames()[..160].to_vec()).unwrap();
    let labels: Vec<usize> = scaled.labels()[..20].to_vec();
    let t1 = Instant::now();
    let gen = generate_batch(&model, &firsts, &labels, 64).unwrap();
    println!("generate 20 seqs in {:.2}s shape {:?}", t1.elapsed().as_secs_f64(), gen.shape());
}
