//! Adaptive-moment optimizer with the usual transformer defaults.

use super::store::ParameterStore;
use crate::error::{Error, Result};

/// Adam with bias correction. Moments live in the parameter store so they
/// persist across steps and survive checkpointing.
#[derive(Debug, Clone, Copy)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    /// One update over every parameter from its accumulated gradient.
    pub fn step(&self, store: &mut ParameterStore, learning_rate: f64) -> Result<()> {
        if !store.grads_ready {
            return Err(Error::InvalidArgument(
                "optimizer step without populated gradients".into(),
            ));
        }
        store.step += 1;
        let t = store.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (_, p) in store.iter_mut() {
            let n = p.value.numel();
            let grad = p.grad.data();
            let m = p.m.data_mut();
            let v = p.v.data_mut();
            let mut update = vec![0.0; n];
            for i in 0..n {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                update[i] = learning_rate * mhat / (vhat.sqrt() + self.eps);
            }
            let w = p.value.data_mut();
            for i in 0..n {
                w[i] -= update[i];
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::tensor::Tensor;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
        store.grads_ready = true;
        Adam::default().step(&mut store, 0.1).unwrap();
        assert_eq!(store.value("w").unwrap().data(), &[1.0, -2.0]);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::new(vec![1], vec![3.0]).unwrap());
        store
            .accumulate_grad("w", &Tensor::new(vec![1], vec![0.7]).unwrap())
            .unwrap();
        store.grads_ready = true;
        let adam = Adam::default();
        adam.step(&mut store, 0.0).unwrap();
        store.grads_ready = true;
        adam.step(&mut store, 0.0).unwrap();
        assert_eq!(store.value("w").unwrap().data(), &[3.0]);
    }

    #[test]
    fn step_without_gradients_errors() {
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::new(vec![1], vec![1.0]).unwrap());
        assert!(Adam::default().step(&mut store, 0.1).is_err());
    }

    #[test]
    fn scalar_trajectory_matches_hand_simulation() {
        // Independent simulation of the update rule on a fixed grad sequence.
        let grads = [0.5, -0.3, 0.1, 0.9, -0.2];
        let (lr, b1, b2, eps): (f64, f64, f64, f64) = (0.01, 0.9, 0.999, 1e-8);

        let mut w_ref = 1.0;
        let (mut m, mut v) = (0.0, 0.0);
        for (k, &g) in grads.iter().enumerate() {
            let t = (k + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1.powi(t));
            let vhat = v / (1.0 - b2.powi(t));
            w_ref -= lr * mhat / (vhat.sqrt() + eps);
        }

        let mut store = ParameterStore::new();
        store.insert("w", Tensor::new(vec![1], vec![1.0]).unwrap());
        let adam = Adam::default();
        for &g in &grads {
            store.zero_grad();
            store
                .accumulate_grad("w", &Tensor::new(vec![1], vec![g]).unwrap())
                .unwrap();
            store.grads_ready = true;
            adam.step(&mut store, lr).unwrap();
        }
        let w = store.value("w").unwrap().data()[0];
        assert!((w - w_ref).abs() < 1e-15, "w={w} ref={w_ref}");
    }

    #[test]
    fn moments_persist_across_steps() {
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::new(vec![1], vec![0.0]).unwrap());
        let adam = Adam::default();
        for _ in 0..2 {
            store.zero_grad();
            store
                .accumulate_grad("w", &Tensor::new(vec![1], vec![1.0]).unwrap())
                .unwrap();
            store.grads_ready = true;
            adam.step(&mut store, 0.1).unwrap();
        }
        assert_eq!(store.step, 2);
        let m = store.get("w").unwrap().m.data()[0];
        // two accumulations of (1 - beta1) * g with decay
        assert!((m - (0.9 * 0.1 + 0.1)).abs() < 1e-15);
    }
}
