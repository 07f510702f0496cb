//! End-to-end CLI exercises: every subcommand drives the binary the way a
//! user would, with micro-scale settings.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tsforge"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn tsforge");
    assert!(
        out.status.success(),
        "tsforge {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn synth_segment_emit_curves() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    run_ok(&[
        "synth",
        "--classes", "3",
        "--channels", "3",
        "--length", "24",
        "--per-class", "8",
        "--out", &path_str(&corpus),
        "--seed", "5",
    ]);
    assert!(corpus.join("manifest.json").is_file());
    assert!(corpus.join("data.csv").is_file());

    let seg = dir.path().join("seg.json");
    let curves = dir.path().join("curves.csv");
    run_ok(&[
        "segment",
        "--corpus", &path_str(&corpus),
        "--degree", "10",
        "--out", &path_str(&seg),
        "--emit-curves", &path_str(&curves),
    ]);
    let seg_body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&seg).unwrap()).unwrap();
    assert_eq!(seg_body["boundaries"].as_array().unwrap().len(), 3);
    assert_eq!(seg_body["weights"].as_array().unwrap().len(), 4);
    let curve_lines = std::fs::read_to_string(&curves).unwrap();
    // header + one row per time step
    assert_eq!(curve_lines.lines().count(), 25);
}

#[test]
fn diffusion_sample_seq_generate_fid_chain() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train");
    let test = dir.path().join("test");
    run_ok(&[
        "synth",
        "--classes", "2",
        "--channels", "3",
        "--length", "16",
        "--per-class", "12",
        "--out", &path_str(&train),
        "--test-out", &path_str(&test),
        "--seed", "9",
    ]);
    assert!(test.join("manifest.json").is_file());

    let dmodel = dir.path().join("dmodel");
    run_ok(&[
        "train-diffusion",
        "--corpus", &path_str(&train),
        "--epochs", "30",
        "--out", &path_str(&dmodel),
        "--seed", "1",
    ]);
    assert!(dmodel.join("weights.json").is_file());
    assert!(dmodel.join("scaler.json").is_file());

    let firsts = dir.path().join("first.csv");
    run_ok(&[
        "sample-first",
        "--model", &path_str(&dmodel),
        "--class", "1",
        "--count", "6",
        "--out", &path_str(&firsts),
        "--seed", "2",
    ]);
    let rows = std::fs::read_to_string(&firsts).unwrap();
    assert_eq!(rows.lines().count(), 6);

    // micro seq config through a pipeline-style file
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{
            "seed": 0,
            "scaler_method": "unit_interval",
            "corpus": {"synthetic": null},
            "seqmodel": {
                "width": 16, "heads": 2, "depth": 1, "ffn_mult": 2,
                "windows": [2], "noise_std": 0.1, "batch_size": 12,
                "epoch_multiplier": 0.01, "phase_lrs": [0.001, 0.001, 0.0001]
            }
        }"#,
    )
    .unwrap();
    let smodel = dir.path().join("smodel");
    run_ok(&[
        "train-seq",
        "--corpus", &path_str(&train),
        "--window", "2",
        "--config", &path_str(&cfg),
        "--out", &path_str(&smodel),
        "--seed", "3",
    ]);
    let log = std::fs::read_to_string(smodel.join("loss_log.csv")).unwrap();
    assert!(log.lines().count() > 2);
    assert!(log.lines().nth(1).unwrap().contains("weighted"));

    let gen = dir.path().join("gen");
    run_ok(&[
        "generate",
        "--seq-model", &path_str(&smodel),
        "--first", &path_str(&firsts),
        "--class", "1",
        "--length", "16",
        "--out", &path_str(&gen),
    ]);
    let (corpus, _) = tsforge::dataset::load_corpus(&gen).unwrap();
    assert_eq!(corpus.len(), 6);
    assert_eq!(corpus.t_len(), 16);
    assert!(corpus.labels().iter().all(|&l| l == 1));

    // fid between train and train must be near zero per class
    let fid_out = dir.path().join("fid.json");
    run_ok(&[
        "evaluate", "fid",
        "--real", &path_str(&train),
        "--gen", &path_str(&train),
        "--reps", "2",
        "--subsample", "1.0",
        "--out", &path_str(&fid_out),
        "--seed", "4",
    ]);
    let fid: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fid_out).unwrap()).unwrap();
    assert!(fid["mean"].as_f64().unwrap() < 1e-6);
}

#[test]
fn run_is_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_micro_run_config(dir.path());
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    run_ok(&["run", "--config", &path_str(&config), "--out", &path_str(&out1)]);
    run_ok(&["run", "--config", &path_str(&config), "--out", &path_str(&out2)]);

    for name in ["report.json", "manifest.json"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out1.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["table1"]["arms"].as_array().unwrap().len(), 6);
    assert!(report["uplift"]["rows"].as_array().unwrap().len() >= 3);
    assert!(!out1.join("FAILED").exists());

    // stage isolation: delete downstream artifacts, rerun, bit-identical
    std::fs::remove_file(out1.join("report.json")).unwrap();
    std::fs::remove_dir_all(out1.join("gen")).unwrap();
    run_ok(&["run", "--config", &path_str(&config), "--out", &path_str(&out1)]);
    let a = std::fs::read(out1.join("report.json")).unwrap();
    let b = std::fs::read(out2.join("report.json")).unwrap();
    assert_eq!(a, b);

    // emit-curves from the artifacts
    run_ok(&["emit-curves", "--artifacts", &path_str(&out1)]);
    let curves = out1.join("curves");
    let avg = std::fs::read_to_string(curves.join("average_curve.csv")).unwrap();
    assert_eq!(avg.lines().count() - 1, 12); // T rows after header
    let diff = std::fs::read_to_string(curves.join("difference_curve.csv")).unwrap();
    assert_eq!(diff.lines().count() - 1, 11); // T-1 rows
    let bounds = std::fs::read_to_string(curves.join("boundaries.csv")).unwrap();
    assert_eq!(bounds.lines().count() - 1, 7); // 3 boundaries + 4 weights
    let seq_log = std::fs::read_to_string(curves.join("losses_seq_w2.csv")).unwrap();
    assert!(seq_log.lines().nth(1).unwrap().contains("weighted"));
}

#[test]
fn invalid_config_and_missing_artifacts_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // config referencing a missing corpus: exit 2 before training
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"seed": 1, "scaler_method": "unit_interval",
            "corpus": {"train_path": "/nope", "test_path": "/nope"}}"#,
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config", &path_str(&bad), "--out", &path_str(&dir.path().join("o"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // emit-curves on an empty directory names the missing stage
    let out = bin()
        .args(["emit-curves", "--artifacts", &path_str(&dir.path().join("empty"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corpus stage"));
}

fn write_micro_run_config(dir: &Path) -> PathBuf {
    let path = dir.join("micro.json");
    std::fs::write(
        &path,
        r#"{
  "seed": 7,
  "scaler_method": "unit_interval",
  "corpus": {
    "synthetic": {
      "class_count": 2,
      "channels": 3,
      "t_len": 12,
      "samples_per_class": 12,
      "class_params": [
        { "onset_frac": 0.2, "plateau": 1.5, "freq": 1.0 },
        { "onset_frac": 0.4, "plateau": 3.0, "freq": 2.0 }
      ],
      "noise_amplitude": 0.05,
      "duration_bounds": [6, 12],
      "subjects": 3
    }
  },
  "diffusion": {
    "steps": 10, "beta_min": 0.01, "beta_max": 0.3, "hidden": 32,
    "epochs": 20, "batch_size": 12, "learning_rate": 0.001
  },
  "seqmodel": {
    "width": 16, "heads": 2, "depth": 1, "ffn_mult": 2, "windows": [2],
    "noise_std": 0.1, "batch_size": 12, "epoch_multiplier": 0.01,
    "phase_lrs": [0.001, 0.001, 0.0001]
  },
  "segmentation": { "degree": 8, "weights": [0.4, 0.3, 0.2, 0.1] },
  "evaluation": {
    "fid_gen_per_class": 10, "fid_repetitions": 3, "subsample_fraction": 0.8,
    "gen_per_class": 4, "classifier_stride": 4, "classifier_hidden": 16,
    "classifier_epochs": 30, "classifier_batch_size": 12,
    "classifier_learning_rate": 0.001, "classifier_seeds": [0]
  }
}"#,
    )
    .unwrap();
    path
}
