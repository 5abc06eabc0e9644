use alloc::vec;
use alloc::vec::Vec;

use libm::{pow, sqrt};

use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self { step: 0, m: vec![0.0; num_params], v: vec![0.0; num_params], beta1: 0.9, beta2: 0.999, eps: 1e-8, lr }
    }

    /// One update. An all-zero gradient advances the step counter and decays
    /// the moments but leaves the parameters untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch("adam parameters, gradients and moments differ in length"));
        }
        self.step += 1;
        let zero = grads.iter().all(|g| *g == 0.0);
        let t = self.step as f64;
        let bc1 = 1.0 - pow(self.beta1, t);
        let bc2 = 1.0 - pow(self.beta2, t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            if !zero {
                let mh = self.m[i] / bc1;
                let vh = self.v[i] / bc2;
                params[i] -= self.lr * mh / (sqrt(vh) + self.eps);
            }
        }
        Ok(())
    }
}
