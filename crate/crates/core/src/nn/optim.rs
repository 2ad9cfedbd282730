use serde::{Deserialize, Serialize};

use super::Param;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are allocated on the first
/// step from the shapes of the parameters it is handed; the same parameter
/// list (same order) must be passed on every later step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Descends along the gradients stored in `params`.
    pub fn step(&mut self, params: Vec<&mut Param>) {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        }
        assert_eq!(self.first.len(), params.len(), "parameter list changed between steps");
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, m), v) in params.into_iter().zip(&mut self.first).zip(&mut self.second) {
            assert_eq!(p.len(), m.len(), "parameter shape changed between steps");
            for i in 0..m.len() {
                let g = p.grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p.value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Param::filled(2, 1.0);
        p.grad = vec![0.5, -2.0];
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        adam.step(vec![&mut p]);
        assert!((p.value[0] - 0.9).abs() < 1e-6);
        assert!((p.value[1] - 1.1).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Param::filled(1, 5.0);
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        for _ in 0..500 {
            p.grad[0] = 2.0 * (p.value[0] - 1.5);
            adam.step(vec![&mut p]);
        }
        assert!((p.value[0] - 1.5).abs() < 1e-2);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = Param::filled(3, 0.25);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(vec![&mut p]);
        assert_eq!(p.value, vec![0.25; 3]);
    }
}
