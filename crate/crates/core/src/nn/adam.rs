//! Adam with bias-corrected moment estimates.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn check(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(alloc::format!("invalid Adam settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, len: usize) -> Self {
        Adam { cfg, m: vec![0.0; len], v: vec![0.0; len], steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, weights: &mut [f64], grad: &[f64]) {
        assert!(weights.len() == self.m.len() && grad.len() == self.m.len());
        self.steps += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.cfg;
        let t = self.steps as i32;
        let c1 = 1.0 - libm::pow(beta1, f64::from(t));
        let c2 = 1.0 - libm::pow(beta2, f64::from(t));
        for i in 0..weights.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            weights[i] -= learning_rate * m_hat / (math::sqrt(v_hat) + epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut w = vec![0.5, -1.25, 3.0];
        let before = w.clone();
        let mut opt = Adam::new(AdamConfig::default(), 3);
        for _ in 0..10 {
            opt.step(&mut w, &[0.0; 3]);
        }
        assert_eq!(w, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut w = vec![0.0, 0.0];
        let mut opt = Adam::new(AdamConfig::default(), 2);
        opt.step(&mut w, &[2.0, -0.5]);
        assert!((w[0] + 1e-3).abs() < 1e-10 && (w[1] - 1e-3).abs() < 1e-10);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut w = vec![3.0];
        let mut opt = Adam::new(AdamConfig { learning_rate: 0.05, ..Default::default() }, 1);
        for _ in 0..2000 {
            let g = [2.0 * (w[0] - 1.0)];
            opt.step(&mut w, &g);
        }
        assert!((w[0] - 1.0).abs() < 1e-3);
    }
}
