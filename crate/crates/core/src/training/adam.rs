use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParameterStore};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay: `θ -= lr * weight_decay * θ` alongside the Adam step.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

/// Adam with bias correction and decoupled weight decay. Moments are kept in
/// the parameter precision.
#[derive(Clone, Debug)]
pub struct Adam<T: Scalar> {
    config: AdamConfig,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
    step: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, store: &ParameterStore<T>) -> Self {
        let zeros: Vec<Matrix<T>> = store.iter().map(|(_, p)| Matrix::zeros(p.rows(), p.cols())).collect();
        Adam { config, m: zeros.clone(), v: zeros, step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients accumulated in `store`.
    pub fn step(&mut self, store: &mut ParameterStore<T>) -> Result<()> {
        if store.len() != self.m.len() {
            return Err(Error::Precondition(format!(
                "optimizer tracks {} parameters, store has {}",
                self.m.len(),
                store.len()
            )));
        }
        self.step += 1;
        let c = self.config;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let bc1 = T::from_f64_lossy(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::from_f64_lossy(1.0 - c.beta2.powi(self.step as i32));
        let lr = T::from_f64_lossy(c.learning_rate);
        let eps = T::from_f64_lossy(c.eps);
        let decay = T::from_f64_lossy(c.learning_rate * c.weight_decay);
        for id in 0..store.len() {
            let (value, grad) = store.value_and_grad_mut(id);
            if value.shape() != self.m[id].shape() {
                return Err(Error::dims("adam", value.shape(), self.m[id].shape()));
            }
            let m = self.m[id].data_mut();
            let v = self.v[id].data_mut();
            for (((theta, &g), m), v) in value.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps) - decay * *theta;
            }
        }
        Ok(())
    }
}

/// Scales all gradients down so their global norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(store: &mut ParameterStore<T>, max_norm: f64) -> f64 {
    let norm = store.grad_norm().to_f64_lossy();
    if max_norm > 0.0 && norm > max_norm {
        store.scale_grads(T::from_f64_lossy(max_norm / norm));
    }
    norm
}
