use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
        {
            return Err(Error::config("training", format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// Bias-corrected Adam with one moment pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) {
        debug_assert_eq!(params.len(), grads.len());
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![vec![0.3, -40.0, 1e-3]];
        let mut adam = Adam::new(AdamConfig::default(), &[3]);
        adam.update(vec![&mut p], &g);
        // m̂ = g and v̂ = g², so each step is lr · g / (|g| + ε)
        let expect = [
            1.0 - 1e-3 * 0.3 / (0.3 + 1e-8),
            -2.0 + 1e-3 * 40.0 / (40.0 + 1e-8),
            0.5 - 1e-3 * 1e-3 / (1e-3 + 1e-8),
        ];
        for (a, b) in p.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = vec![1.0, 2.0];
        let mut adam = Adam::new(AdamConfig::default(), &[2]);
        adam.update(vec![&mut p], &[vec![0.0, 0.0]]);
        assert_eq!(p, vec![1.0, 2.0]);
    }
}
