//! Sweep noise amplitude and diffusion epochs: reports the six-arm FID
//! ordering and the no-augmentation classifier baseline per setting.

use tsforge::dataset::{generate_synthetic, SyntheticSpec};
use tsforge::diffusion::DiffusionConfig;
use tsforge::evaluation::{evaluate_classifier, run_table1_matrix, train_classifier, ClassifierConfig};
use tsforge::netcore::derive_seed;

fn main() {
    let seed = 42u64;
    for &noise in &[0.07f64, 0.1, 0.13] {
        let mut spec = SyntheticSpec::desk(10, 8, 64, 50);
        spec.noise_amplitude = noise;
        let train = generate_synthetic(&spec, derive_seed(seed, "train-corpus")).unwrap();
        let test = generate_synthetic(&spec, derive_seed(seed, "test-corpus")).unwrap();

        let clf = train_classifier(&train, ClassifierConfig::default(), 0).unwrap();
        let acc = evaluate_classifier(&clf, &test).unwrap().accuracy;
        println!("noise={noise}: baseline test accuracy {acc:.3}");

        for &epochs in &[150usize, 400] {
            let proto = DiffusionConfig {
                epochs,
                ..DiffusionConfig::desk(8, 10)
            };
            let report =
                run_table1_matrix(&train, &proto, 100, 20, 0.8, derive_seed(seed, "table1")).unwrap();
            let mut arms: Vec<(String, f64)> = report
                .arms
                .iter()
                .map(|a| (format!("{}+{}", a.scaling, a.target), a.avg_fid))
                .collect();
            arms.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
            let order: Vec<String> = arms.iter().map(|(n, v)| format!("{n}={v:.3}")).collect();
            println!(
                "  epochs={epochs}: baseline_fid={:.3}\n    {}",
                report.real_split_fid,
                order.join("\n    ")
            );
        }
    }
}
