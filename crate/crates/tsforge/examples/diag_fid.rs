//! Diagnose per-class mean/std mismatch of generated first frames for the
//! unit-interval arms.

use tsforge::dataset::{generate_synthetic, Scaler, ScalerMethod, SyntheticSpec};
use tsforge::diffusion::{sample_first_steps, train_diffusion, DiffusionConfig, PredictionTarget};
use tsforge::evaluation::class_first_frames;
use tsforge::netcore::{derive_seed, Tensor};

fn stats(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = x.dims2().unwrap();
    let mut mean = vec![0.0; d];
    for row in x.data().chunks(d) {
        for (m, v) in mean.iter_mut().zip(row) { *m += v; }
    }
    for m in mean.iter_mut() { *m /= n as f64; }
    let mut std = vec![0.0; d];
    for row in x.data().chunks(d) {
        for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) { *s += (v - m) * (v - m); }
    }
    for s in std.iter_mut() { *s = (*s / n as f64).sqrt(); }
    (mean, std)
}

fn main() {
    let seed = 42u64;
    let spec = SyntheticSpec::desk(10, 8, 64, 25);
    let train = generate_synthetic(&spec, derive_seed(seed, "train-corpus")).unwrap();
    let scaler = Scaler::fit(&train, ScalerMethod::UnitInterval).unwrap();
    let d = train.channels();
    let mut firsts = train.first_frames();
    scaler.apply_frames(&mut firsts, d).unwrap();
    let x0 = Tensor::new(vec![train.len(), d], firsts).unwrap();

    for (name, target, clamp) in [
        ("unit+vector", PredictionTarget::CleanVector, Some((0.0, 1.0))),
        ("unit+noise", PredictionTarget::Noise, None),
    ] {
        let config = DiffusionConfig { target, ..DiffusionConfig::desk(d, 10) };
        let (model, traj) = train_diffusion(&x0, train.labels(), config, 7).unwrap();
        println!("{name}: train loss {:.5} -> {:.5}", traj[0], traj.last().unwrap());
        for class in [0usize, 5] {
            let real = class_first_frames(&train, class).unwrap();
            // scale real to unit space for comparison
            let mut rdata = real.data().to_vec();
            scaler.apply_frames(&mut rdata, d).unwrap();
            let rt = Tensor::new(vec![real.dims2().unwrap().0, d], rdata).unwrap();
            let gen = sample_first_steps(&model, &model.schedule, class, 200, d, 11, clamp).unwrap();
            let (rm, rs) = stats(&rt);
            let (gm, gs) = stats(&gen);
            let mean_err: f64 = rm.iter().zip(&gm).map(|(a, b)| (a - b).abs()).sum::<f64>() / d as f64;
            let rs_avg: f64 = rs.iter().sum::<f64>() / d as f64;
            let gs_avg: f64 = gs.iter().sum::<f64>() / d as f64;
            println!("  class {class}: |mean err| {mean_err:.4}; real std {rs_avg:.4} vs gen std {gs_avg:.4}");
        }
    }
}
