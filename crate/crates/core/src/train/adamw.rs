use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Param;

/// Hyperparameters of the decoupled-weight-decay Adam update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// AdamW optimizer state: one first/second moment buffer per parameter.
///
/// ```text
/// m ← β1·m + (1 − β1)·g          v ← β2·v + (1 − β2)·g²
/// θ ← θ − lr·m̂/(√v̂ + ε) − lr·λ·θ,   m̂ = m/(1 − β1ᵗ), v̂ = v/(1 − β2ᵗ)
/// ```
#[derive(Debug, Clone)]
pub struct AdamW {
    config: AdamWConfig,
    steps: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            steps: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    /// Applies one update to `params` (always passed in the same order) and
    /// zeroes their gradients. Non-finite gradients abort before anything changes.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Param>) -> Result<()> {
        let mut params: Vec<&mut Param> = params.into_iter().collect();
        if let Some(p) = params.iter().find(|p| !p.grad.all_finite()) {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (vec![0.0; p.value.len()], vec![0.0; p.value.len()]))
                .collect();
        } else if self.moments.len() != params.len() {
            return Err(Error::InvalidSize(format!(
                "optimizer tracks {} parameters, got {}",
                self.moments.len(),
                params.len()
            )));
        }
        self.steps += 1;
        let c = self.config;
        let t = self.steps as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (p, (m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
            let Param { value, grad, .. } = &mut **p;
            for (((theta, g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data_mut().iter_mut())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * *g;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * *g * *g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *theta -= c.learning_rate * m_hat / (v_hat.sqrt() + c.eps)
                    + c.learning_rate * c.weight_decay * *theta;
                *g = 0.0;
            }
        }
        Ok(())
    }
}
