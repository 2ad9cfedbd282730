//! Minimal dense building blocks with hand-written backward passes.
//!
//! Everything runs in `f64` so that analytic gradients can be checked
//! against central finite differences at tight tolerances. Layers own their
//! gradient buffers; a forward pass in training mode returns whatever the
//! matching backward pass needs.

mod layers;
mod optim;
mod tensor;

pub use layers::{
    BatchNorm, BnCache, Conv, ConvTranspose, Linear, MaxPool, PoolCache, Upsample,
};
pub use optim::{Adam, AdamConfig};
pub use tensor::FeatureMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// A trainable tensor together with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn zeros(len: usize) -> Self {
        Param {
            value: vec![0.0; len],
            grad: vec![0.0; len],
        }
    }

    pub fn filled(len: usize, v: f64) -> Self {
        Param {
            value: vec![v; len],
            grad: vec![0.0; len],
        }
    }

    /// Zero-mean normal init with standard deviation `gain / sqrt(fan_in)`.
    pub fn fan_in<R: Rng + ?Sized>(len: usize, fan_in: usize, gain: f64, rng: &mut R) -> Self {
        let std = gain / (fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        Param {
            value: (0..len).map(|_| normal.sample(rng)).collect(),
            grad: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// How batch normalization treats its statistics during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Batch statistics, running averages updated.
    Train,
    /// Batch statistics, running averages left alone.
    Frozen,
    /// Running averages only.
    Eval,
}

/// Access to the tensors a component owns, for optimizers and checkpoints.
pub trait Module {
    /// Trainable parameters in a fixed order.
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn params(&self) -> Vec<&Param>;

    /// Every tensor needed to restore the component (parameters and
    /// buffers), with dotted names under `prefix`.
    fn visit_tensors(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64]));

    fn visit_tensors_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Vec<f64>));

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Numerically stable softmax of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu_inplace(xs: &mut [f64]) {
    xs.iter_mut().for_each(|x| {
        if *x < 0.0 {
            *x = 0.0
        }
    });
}

/// Masks `grad` where the rectifier output was not positive.
pub fn relu_backward(output: &[f64], grad: &mut [f64]) {
    for (g, &y) in grad.iter_mut().zip(output) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_is_a_distribution() {
        let p = softmax(&[1000.0, 0.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > 0.999);
        let u = softmax(&[0.0; 4]);
        assert!(u.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn sigmoid_stays_open_interval() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(30.0) < 1.0);
        assert!(sigmoid(-30.0) > 0.0);
    }
}
