//! Named parameter tensors with gradient accumulators and optimizer moments.

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// One trainable tensor plus its gradient and adaptive-moment state.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub m: Tensor,
    pub v: Tensor,
}

/// Ordered collection of named parameters. Insertion order is the update
/// order, so identical construction sequences give identical training runs.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    params: IndexMap<String, Parameter>,
    /// Adam step counter, shared across parameters.
    pub step: u64,
    /// Set by `Graph::backward`, cleared by `zero_grad`.
    pub grads_ready: bool,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        let shape = value.shape().to_vec();
        self.params.insert(
            name.to_string(),
            Parameter {
                value,
                grad: Tensor::zeros(shape.clone()),
                m: Tensor::zeros(shape.clone()),
                v: Tensor::zeros(shape),
            },
        );
    }

    /// Glorot-style uniform init in +-sqrt(6/(fan_in+fan_out)).
    pub fn insert_dense(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        self.insert(name, Tensor::new(vec![fan_in, fan_out], data).unwrap());
    }

    pub fn insert_zeros(&mut self, name: &str, shape: Vec<usize>) {
        self.insert(name, Tensor::zeros(shape));
    }

    /// Embedding init: normal(0, 0.02).
    pub fn insert_embedding(&mut self, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) {
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0, 0.02).unwrap();
        let data: Vec<f64> = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        self.insert(name, Tensor::new(vec![rows, cols], data).unwrap());
    }

    pub fn get(&self, name: &str) -> Result<&Parameter> {
        self.params
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter '{name}'")))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.get(name)?.value)
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &Tensor) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter '{name}'")))?;
        if p.grad.shape() != grad.shape() {
            return Err(Error::Shape(format!(
                "gradient shape {:?} for parameter '{}' of shape {:?}",
                grad.shape(),
                name,
                p.value.shape()
            )));
        }
        p.grad.add_assign(grad);
        Ok(())
    }

    /// Reset every gradient accumulator to exact zero.
    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad = Tensor::zeros(p.grad.shape().to_vec());
        }
        self.grads_ready = false;
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Parameter)> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.params.values().map(|p| p.value.numel()).sum()
    }
}

/// Serialized checkpoint: parameter name -> shape + flat values
/// (9 significant digits), plus optimizer state.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub params: IndexMap<String, CheckpointEntry>,
    pub optimizer: OptimizerState,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub m: IndexMap<String, Vec<f64>>,
    pub v: IndexMap<String, Vec<f64>>,
}

/// Round to 9 significant digits through the decimal representation.
pub fn round_sig9(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().unwrap()
}

impl ParameterStore {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut params = IndexMap::new();
        let mut m = IndexMap::new();
        let mut v = IndexMap::new();
        for (name, p) in &self.params {
            params.insert(
                name.clone(),
                CheckpointEntry {
                    shape: p.value.shape().to_vec(),
                    values: p.value.data().iter().copied().map(round_sig9).collect(),
                },
            );
            m.insert(name.clone(), p.m.data().iter().copied().map(round_sig9).collect());
            v.insert(name.clone(), p.v.data().iter().copied().map(round_sig9).collect());
        }
        Checkpoint {
            params,
            optimizer: OptimizerState {
                step: self.step,
                m,
                v,
            },
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut store = ParameterStore::new();
        for (name, entry) in &ck.params {
            store.insert(name, Tensor::new(entry.shape.clone(), entry.values.clone())?);
        }
        store.step = ck.optimizer.step;
        for (name, vals) in &ck.optimizer.m {
            let p = store
                .params
                .get_mut(name)
                .ok_or_else(|| Error::Config(format!("optimizer state for unknown '{name}'")))?;
            p.m = Tensor::new(p.value.shape().to_vec(), vals.clone())?;
        }
        for (name, vals) in &ck.optimizer.v {
            let p = store
                .params
                .get_mut(name)
                .ok_or_else(|| Error::Config(format!("optimizer state for unknown '{name}'")))?;
            p.v = Tensor::new(p.value.shape().to_vec(), vals.clone())?;
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_grad_resets_exactly() {
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        store
            .accumulate_grad("w", &Tensor::new(vec![2], vec![0.5, -0.5]).unwrap())
            .unwrap();
        store.zero_grad();
        assert_eq!(store.get("w").unwrap().grad.data(), &[0.0, 0.0]);
    }

    #[test]
    fn grad_shape_must_match() {
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::zeros(vec![2, 2]));
        let bad = Tensor::zeros(vec![3]);
        assert!(store.accumulate_grad("w", &bad).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_preserves_rounded_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParameterStore::new();
        store.insert_dense("a", 3, 4, &mut rng);
        store.insert_embedding("e", 5, 4, &mut rng);
        store.step = 42;
        let ck = store.to_checkpoint();
        let json = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        let restored = ParameterStore::from_checkpoint(&back).unwrap();
        assert_eq!(restored.step, 42);
        for name in store.names() {
            let orig = store.value(name).unwrap();
            let rest = restored.value(name).unwrap();
            for (o, r) in orig.data().iter().zip(rest.data()) {
                assert!((o - r).abs() <= o.abs() * 1e-8 + 1e-12);
            }
        }
    }

    #[test]
    fn round_sig9_is_stable() {
        let v = 0.123456789123456789;
        let r = round_sig9(v);
        assert_eq!(r, round_sig9(r));
        assert!((r - v).abs() < 1e-9);
    }
}
