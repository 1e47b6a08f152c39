//! Adam and SGD parameter updates over the named parameter store.

use std::collections::HashMap;
use std::fmt;

use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

/// Optimizer state: first/second moment buffers keyed by parameter name.
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
    weight_decay: f32,
    step_count: u64,
    moment1: HashMap<String, Vec<f32>>,
    moment2: HashMap<String, Vec<f32>>,
}

impl Optimizer {
    pub fn new(
        kind: OptimizerKind,
        lr: f32,
        beta1: f32,
        beta2: f32,
        eps: f32,
        weight_decay: f32,
    ) -> Self {
        Optimizer {
            kind,
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            step_count: 0,
            moment1: HashMap::new(),
            moment2: HashMap::new(),
        }
    }

    /// Applies one update using each parameter's accumulated gradient, then
    /// clears the gradients. Parameters without a gradient are untouched.
    pub fn step(&mut self, params: &mut ModelParams) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, tensor) in params.iter_mut() {
            let Some(grad) = tensor.grad.take() else { continue };
            match self.kind {
                OptimizerKind::Sgd => {
                    let data = tensor.data_mut();
                    for (p, &g) in data.iter_mut().zip(&grad) {
                        let g = g + self.weight_decay * *p;
                        *p -= self.lr * g;
                    }
                }
                OptimizerKind::Adam => {
                    let m = self
                        .moment1
                        .entry(name.to_string())
                        .or_insert_with(|| vec![0.0; grad.len()]);
                    let v = self
                        .moment2
                        .entry(name.to_string())
                        .or_insert_with(|| vec![0.0; grad.len()]);
                    let data = tensor.data_mut();
                    for i in 0..grad.len() {
                        let g = grad[i] + self.weight_decay * data[i];
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
        }
    }
}
