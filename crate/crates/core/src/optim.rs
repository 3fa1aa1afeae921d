//! Adaptive moment estimation over flat parameter arrays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<F> {
    pub config: AdamConfig,
    m: Vec<F>,
    v: Vec<F>,
    t: i32,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self { config, m: vec![F::zero(); len], v: vec![F::zero(); len], t: 0 }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// One update. An all-zero gradient is not counted as a step and leaves
    /// both the parameters and the moment estimates untouched.
    pub fn step(&mut self, params: &mut [F], grad: &[F]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Precondition(format!(
                "optimizer sized for {} parameters got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        if grad.iter().all(|g| g.is_zero()) {
            return Ok(());
        }
        self.t += 1;
        let c = &self.config;
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let lr = F::of(c.learning_rate);
        let eps = F::of(c.epsilon);
        let bc1 = F::one() - b1.powi(self.t);
        let bc2 = F::one() - b2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (F::one() - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (F::one() - b2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Plain gradient step `p -= lr * g`.
pub fn sgd_step<F: Scalar>(params: &mut [F], grad: &[F], learning_rate: f64) {
    let lr = F::of(learning_rate);
    for (p, &g) in params.iter_mut().zip(grad) {
        *p = *p - lr * g;
    }
}
