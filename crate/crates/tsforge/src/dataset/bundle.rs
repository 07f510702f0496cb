//! Corpus bundle directory format: `manifest.json` with geometry, labels,
//! valid lengths and optional scaler state; `data.csv` with one row per
//! (sample, time step) holding `sample_index, t, v0..v{d-1}` at 9
//! significant digits. Save-then-load is bit-exact on the textual form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Scaler, SequenceCorpus};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    n: usize,
    t_len: usize,
    d: usize,
    class_count: usize,
    labels: Vec<usize>,
    valid_lengths: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaler: Option<Scaler>,
}

fn fmt9(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn save_corpus(corpus: &SequenceCorpus, scaler: Option<&Scaler>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let manifest = Manifest {
        n: corpus.len(),
        t_len: corpus.t_len(),
        d: corpus.channels(),
        class_count: corpus.class_count(),
        labels: corpus.labels().to_vec(),
        valid_lengths: corpus.valid_lengths().to_vec(),
        scaler: scaler.cloned(),
    };
    let mpath = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
    fs::write(&mpath, body).map_err(|e| Error::io(mpath.display().to_string(), e))?;

    let mut csv = String::new();
    for i in 0..corpus.len() {
        for t in 0..corpus.t_len() {
            csv.push_str(&i.to_string());
            csv.push(',');
            csv.push_str(&t.to_string());
            for v in corpus.frame(i, t) {
                csv.push(',');
                csv.push_str(&fmt9(*v));
            }
            csv.push('\n');
        }
    }
    let dpath = dir.join("data.csv");
    fs::write(&dpath, csv).map_err(|e| Error::io(dpath.display().to_string(), e))?;
    Ok(())
}

/// Load a bundle, re-validating every corpus invariant (padding included).
pub fn load_corpus(dir: &Path) -> Result<(SequenceCorpus, Option<Scaler>)> {
    let mpath = dir.join("manifest.json");
    let body = fs::read_to_string(&mpath).map_err(|e| Error::io(mpath.display().to_string(), e))?;
    let manifest: Manifest = serde_json::from_str(&body)
        .map_err(|e| Error::Config(format!("{}: {e}", mpath.display())))?;

    let dpath = dir.join("data.csv");
    let text = fs::read_to_string(&dpath).map_err(|e| Error::io(dpath.display().to_string(), e))?;
    let path_str = dpath.display().to_string();
    let expected_rows = manifest.n * manifest.t_len;
    let mut data = Vec::with_capacity(expected_rows * manifest.d);

    let mut row = 0usize;
    for line in text.lines() {
        row += 1;
        let parse_err = |field: usize, msg: String| Error::Parse {
            path: path_str.clone(),
            row,
            field,
            msg,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + manifest.d {
            return Err(parse_err(
                fields.len(),
                format!("expected {} fields, found {}", 2 + manifest.d, fields.len()),
            ));
        }
        let sample: usize = fields[0]
            .parse()
            .map_err(|e| parse_err(1, format!("bad sample index: {e}")))?;
        let t: usize = fields[1]
            .parse()
            .map_err(|e| parse_err(2, format!("bad time step: {e}")))?;
        let expect_sample = (row - 1) / manifest.t_len;
        let expect_t = (row - 1) % manifest.t_len;
        if sample != expect_sample || t != expect_t {
            return Err(parse_err(
                1,
                format!("row out of order: got ({sample}, {t}), expected ({expect_sample}, {expect_t})"),
            ));
        }
        if sample >= manifest.n {
            return Err(parse_err(1, format!("sample index {sample} >= n = {}", manifest.n)));
        }
        for (k, raw) in fields[2..].iter().enumerate() {
            let v: f64 = raw
                .parse()
                .map_err(|e| parse_err(3 + k, format!("bad value '{raw}': {e}")))?;
            if !v.is_finite() {
                return Err(parse_err(3 + k, format!("non-finite value '{raw}'")));
            }
            data.push(v);
        }
    }
    if row != expected_rows {
        return Err(Error::Parse {
            path: path_str,
            row,
            field: 0,
            msg: format!("expected {expected_rows} rows (n*t_len), found {row}"),
        });
    }

    let corpus = SequenceCorpus::new(
        manifest.t_len,
        manifest.d,
        manifest.class_count,
        data,
        manifest.labels,
        manifest.valid_lengths,
    )?;
    Ok((corpus, manifest.scaler))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, pad_to_length, ScalerMethod, SyntheticSpec};

    #[test]
    fn save_load_save_is_textually_identical() {
        let spec = SyntheticSpec::desk(3, 2, 8, 4);
        let corpus = generate_synthetic(&spec, 11).unwrap();
        let scaler = Scaler::fit(&corpus, ScalerMethod::UnitInterval).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let d1 = dir.path().join("a");
        let d2 = dir.path().join("b");
        save_corpus(&corpus, Some(&scaler), &d1).unwrap();
        let (loaded, s2) = load_corpus(&d1).unwrap();
        save_corpus(&loaded, s2.as_ref(), &d2).unwrap();
        let csv1 = fs::read_to_string(d1.join("data.csv")).unwrap();
        let csv2 = fs::read_to_string(d2.join("data.csv")).unwrap();
        assert_eq!(csv1, csv2);
        let m1 = fs::read_to_string(d1.join("manifest.json")).unwrap();
        let m2 = fs::read_to_string(d2.join("manifest.json")).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn roundtrip_small_known_corpus() {
        let s0 = vec![vec![0.25, 1.0], vec![0.5, 2.0]];
        let s1 = vec![vec![-1.0, 3.0], vec![0.0, 4.0]];
        let corpus = pad_to_length(&[s0, s1], &[0, 1], 2, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus, None, dir.path()).unwrap();
        let (loaded, scaler) = load_corpus(dir.path()).unwrap();
        assert!(scaler.is_none());
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.t_len(), 4);
        assert_eq!(loaded.labels(), &[0, 1]);
        assert_eq!(loaded.frame(0, 0), &[0.25, 1.0]);
    }

    #[test]
    fn shape_mismatch_reported_with_location() {
        let s0 = vec![vec![1.0], vec![2.0]];
        let corpus = pad_to_length(&[s0], &[0], 1, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus, None, dir.path()).unwrap();
        // append a spurious extra time step for a phantom second sample
        let dpath = dir.path().join("data.csv");
        let mut text = fs::read_to_string(&dpath).unwrap();
        text.push_str("1,0,3.0e0\n");
        fs::write(&dpath, text).unwrap();
        match load_corpus(dir.path()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn padding_violation_detected_on_load() {
        let s0 = vec![vec![1.0], vec![2.0]];
        let corpus = pad_to_length(&[s0], &[0], 1, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus, None, dir.path()).unwrap();
        let dpath = dir.path().join("data.csv");
        let text = fs::read_to_string(&dpath).unwrap();
        // padded frames are rows t=2,3; corrupt the final one by +0.5
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3] = "0,3,2.50000000e0".into();
        fs::write(&dpath, lines.join("\n") + "\n").unwrap();
        match load_corpus(dir.path()) {
            Err(Error::Integrity(msg)) => assert!(msg.contains("padded frame")),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_value_reports_row_and_field() {
        let s0 = vec![vec![1.0, 2.0]];
        let corpus = pad_to_length(&[s0], &[0], 1, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus, None, dir.path()).unwrap();
        let dpath = dir.path().join("data.csv");
        fs::write(&dpath, "0,0,1.0e0,oops\n").unwrap();
        match load_corpus(dir.path()) {
            Err(Error::Parse { row, field, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(field, 4);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
