//! Adam optimizer state and update rule.

use ndarray::{Array1, Array2};

use super::{Gradients, ModelParams};

/// First/second moment accumulators plus the Adam hyperparameters.
///
/// `step_count` increments by exactly one per [`apply`](AdamState::apply).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
    m_weights: Vec<Array2<f64>>,
    v_weights: Vec<Array2<f64>>,
    m_biases: Vec<Array1<f64>>,
    v_biases: Vec<Array1<f64>>,
}

impl AdamState {
    /// Zero-initialized state shaped like `params`.
    pub fn new(params: &ModelParams, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            lr,
            beta1,
            beta2,
            eps,
            step_count: 0,
            m_weights: params
                .weights()
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            v_weights: params
                .weights()
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            m_biases: params
                .biases()
                .iter()
                .map(|b| Array1::zeros(b.raw_dim()))
                .collect(),
            v_biases: params
                .biases()
                .iter()
                .map(|b| Array1::zeros(b.raw_dim()))
                .collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// One Adam update with bias correction:
    /// `m <- b1*m + (1-b1)*g`, `v <- b2*v + (1-b2)*g^2`,
    /// `w <- w - lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)`.
    pub fn apply(&mut self, params: &mut ModelParams, grads: &Gradients) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);

        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        for l in 0..params.weights.len() {
            for ((p, m), (v, g)) in params.weights[l]
                .iter_mut()
                .zip(self.m_weights[l].iter_mut())
                .zip(self.v_weights[l].iter_mut().zip(grads.d_weights[l].iter()))
            {
                update(p, m, v, *g);
            }
            for ((p, m), (v, g)) in params.biases[l]
                .iter_mut()
                .zip(self.m_biases[l].iter_mut())
                .zip(self.v_biases[l].iter_mut().zip(grads.d_biases[l].iter()))
            {
                update(p, m, v, *g);
            }
        }
    }
}
