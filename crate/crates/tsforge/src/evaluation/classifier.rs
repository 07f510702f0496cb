//! Dense probe classifier over time-downsampled sequences, used for the
//! accuracy-uplift protocol and the similarity probe.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Scaler, ScalerMethod, SequenceCorpus};
use crate::error::{Error, Result};
use crate::netcore::{derive_seed, Adam, Dense, Graph, ParameterStore, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Keep every `stride`-th time step before flattening.
    pub stride: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            stride: 4,
            hidden: 64,
            epochs: 300,
            batch_size: 50,
            learning_rate: 1e-3,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("classifier dimensions must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("classifier learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Small dense network over flattened stride-subsampled sequences. Owns a
/// unit-interval scaler fitted on its training corpus, so raw-range corpora
/// evaluate consistently.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub config: ClassifierConfig,
    pub class_count: usize,
    t_len: usize,
    channels: usize,
    scaler: Scaler,
    store: ParameterStore,
    lin1: Dense,
    lin2: Dense,
}

fn features(corpus: &SequenceCorpus, scaler: &Scaler, stride: usize) -> Result<Tensor> {
    let (n, t, d) = (corpus.len(), corpus.t_len(), corpus.channels());
    let scaled = scaler.apply(corpus)?;
    let steps: Vec<usize> = (0..t).step_by(stride).collect();
    let f = steps.len() * d;
    let mut data = Vec::with_capacity(n * f);
    for i in 0..n {
        for &s in &steps {
            data.extend_from_slice(scaled.frame(i, s));
        }
    }
    Tensor::new(vec![n, f], data)
}

impl Classifier {
    pub fn feature_dim(&self) -> usize {
        ((self.t_len + self.config.stride - 1) / self.config.stride) * self.channels
    }

    fn check_corpus(&self, corpus: &SequenceCorpus) -> Result<()> {
        if corpus.class_count() != self.class_count {
            return Err(Error::Shape(format!(
                "corpus has {} classes, classifier expects {}",
                corpus.class_count(),
                self.class_count
            )));
        }
        if corpus.t_len() != self.t_len || corpus.channels() != self.channels {
            return Err(Error::Shape(format!(
                "corpus geometry ({}, {}) vs classifier ({}, {})",
                corpus.t_len(),
                corpus.channels(),
                self.t_len,
                self.channels
            )));
        }
        Ok(())
    }

    fn logits(&self, g: &mut Graph, x: Tensor) -> Result<crate::netcore::NodeId> {
        let xi = g.input(x);
        let h = self.lin1.forward(g, &self.store, xi)?;
        let h = g.relu(h);
        self.lin2.forward(g, &self.store, h)
    }

    pub fn predict(&self, corpus: &SequenceCorpus) -> Result<Vec<usize>> {
        self.check_corpus(corpus)?;
        let x = features(corpus, &self.scaler, self.config.stride)?;
        let mut g = Graph::new();
        let out = self.logits(&mut g, x)?;
        let v = g.value(out);
        let (n, c) = v.dims2()?;
        let mut preds = Vec::with_capacity(n);
        for row in 0..n {
            let slice = &v.data()[row * c..(row + 1) * c];
            let best = slice
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            preds.push(best);
        }
        Ok(preds)
    }
}

/// Cross-entropy training over shuffled minibatches; deterministic under
/// the seed.
pub fn train_classifier(
    corpus: &SequenceCorpus,
    config: ClassifierConfig,
    seed: u64,
) -> Result<Classifier> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("cannot train a classifier on no data".into()));
    }
    let scaler = Scaler::fit(corpus, ScalerMethod::UnitInterval)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "classifier-init"));
    let mut store = ParameterStore::new();
    let t_len = corpus.t_len();
    let channels = corpus.channels();
    let steps = (0..t_len).step_by(config.stride).count();
    let feature_dim = steps * channels;
    let lin1 = Dense::init(&mut store, "clf.lin1", feature_dim, config.hidden, &mut rng);
    let lin2 = Dense::init(&mut store, "clf.lin2", config.hidden, corpus.class_count(), &mut rng);
    let mut clf = Classifier {
        config,
        class_count: corpus.class_count(),
        t_len,
        channels,
        scaler,
        store,
        lin1,
        lin2,
    };

    let x = features(corpus, &clf.scaler, clf.config.stride)?;
    let f = x.dims2()?.1;
    let labels = corpus.labels().to_vec();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut train_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "classifier-train"));
    let adam = Adam::default();
    for _ in 0..clf.config.epochs {
        order.shuffle(&mut train_rng);
        for chunk in order.chunks(clf.config.batch_size) {
            let mut xb = Tensor::zeros(vec![chunk.len(), f]);
            let mut yb = Vec::with_capacity(chunk.len());
            for (row, &i) in chunk.iter().enumerate() {
                xb.data_mut()[row * f..(row + 1) * f]
                    .copy_from_slice(&x.data()[i * f..(i + 1) * f]);
                yb.push(labels[i]);
            }
            let mut g = Graph::new();
            let logits = clf.logits(&mut g, xb)?;
            let loss = g.cross_entropy_logits(logits, &yb)?;
            if !g.value(loss).item().is_finite() {
                return Err(Error::Numerical("classifier loss became non-finite".into()));
            }
            clf.store.zero_grad();
            g.backward(loss, &mut clf.store)?;
            adam.step(&mut clf.store, clf.config.learning_rate)?;
        }
    }
    Ok(clf)
}

/// Accuracy and row-major confusion counts (rows: true class).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierEval {
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
}

pub fn evaluate_classifier(clf: &Classifier, corpus: &SequenceCorpus) -> Result<ClassifierEval> {
    let preds = clf.predict(corpus)?;
    let c = clf.class_count;
    let mut confusion = vec![vec![0usize; c]; c];
    let mut correct = 0usize;
    for (&truth, &pred) in corpus.labels().iter().zip(&preds) {
        confusion[truth][pred] += 1;
        if truth == pred {
            correct += 1;
        }
    }
    Ok(ClassifierEval {
        accuracy: correct as f64 / corpus.len() as f64,
        confusion,
        total: corpus.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticSpec};

    fn bench_corpora() -> (SequenceCorpus, SequenceCorpus) {
        let spec = SyntheticSpec::desk(4, 4, 32, 24);
        let full = generate_synthetic(&spec, 20).unwrap();
        crate::dataset::split_per_class(&full, 0.5, 3).unwrap()
    }

    #[test]
    fn train_accuracy_at_least_test_accuracy() {
        let (train, test) = bench_corpora();
        let clf = train_classifier(&train, ClassifierConfig::default(), 1).unwrap();
        let on_train = evaluate_classifier(&clf, &train).unwrap();
        let on_test = evaluate_classifier(&clf, &test).unwrap();
        assert!(
            on_train.accuracy >= on_test.accuracy,
            "train {} < test {}",
            on_train.accuracy,
            on_test.accuracy
        );
        assert!(on_train.accuracy > 0.5, "failed to learn: {}", on_train.accuracy);
    }

    #[test]
    fn confusion_trace_matches_accuracy_and_row_sums() {
        let (train, test) = bench_corpora();
        let clf = train_classifier(&train, ClassifierConfig::default(), 1).unwrap();
        let eval = evaluate_classifier(&clf, &test).unwrap();
        let trace: usize = (0..4).map(|i| eval.confusion[i][i]).sum();
        assert!((eval.accuracy - trace as f64 / eval.total as f64).abs() < 1e-12);
        for (class, row) in eval.confusion.iter().enumerate() {
            let sum: usize = row.iter().sum();
            assert_eq!(sum, test.class_indices(class).len());
        }
    }

    #[test]
    fn untrained_classifier_near_chance() {
        let (train, test) = bench_corpora();
        let config = ClassifierConfig {
            epochs: 1,
            learning_rate: 1e-12,
            ..ClassifierConfig::default()
        };
        let clf = train_classifier(&train, config, 9).unwrap();
        let eval = evaluate_classifier(&clf, &test).unwrap();
        // 4 classes: chance 0.25; a frozen random net should stay well below
        // a trained one and broadly near chance
        assert!(eval.accuracy < 0.6, "random net suspiciously good: {}", eval.accuracy);
    }

    #[test]
    fn deterministic_under_seed() {
        let (train, test) = bench_corpora();
        let a = train_classifier(&train, ClassifierConfig::default(), 5).unwrap();
        let b = train_classifier(&train, ClassifierConfig::default(), 5).unwrap();
        assert_eq!(a.predict(&test).unwrap(), b.predict(&test).unwrap());
    }

    #[test]
    fn class_count_mismatch_rejected() {
        let (train, _) = bench_corpora();
        let clf = train_classifier(&train, ClassifierConfig::default(), 1).unwrap();
        let other_spec = SyntheticSpec::desk(3, 4, 32, 4);
        let other = generate_synthetic(&other_spec, 0).unwrap();
        assert!(evaluate_classifier(&clf, &other).is_err());
    }
}
