//! Optimizers. State is keyed by parameter order, which is fixed for a
//! given model, so updates are reproducible.

use crate::tensor::{Element, Tensor};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update across all (value, gradient) pairs. The pairs
    /// must come in the same order on every call.
    pub fn step<T: Element>(&mut self, params: &mut [(String, &mut Tensor<T>, &mut Tensor<T>)]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|(_, v, _)| vec![0.0; v.numel()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (p, (_, value, grad)) in params.iter_mut().enumerate() {
            let m = &mut self.m[p];
            let v = &mut self.v[p];
            for i in 0..value.data.len() {
                let g = grad.data[i].as_f64();
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let delta = self.lr * m_hat / (v_hat.sqrt() + self.eps);
                value.data[i] = T::from_f64(value.data[i].as_f64() - delta);
            }
        }
    }
}

/// Plain gradient descent.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Sgd {
        Sgd { lr }
    }

    pub fn step<T: Element>(&mut self, params: &mut [(String, &mut Tensor<T>, &mut Tensor<T>)]) {
        for (_, value, grad) in params.iter_mut() {
            for i in 0..value.data.len() {
                let g = grad.data[i].as_f64();
                value.data[i] = T::from_f64(value.data[i].as_f64() - self.lr * g);
            }
        }
    }
}
