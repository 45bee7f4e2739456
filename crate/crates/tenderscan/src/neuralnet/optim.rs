//! Optimizers. State is kept per parameter tensor, indexed by the model's
//! fixed traversal order, so updates are deterministic.

use super::layer::Param;
use super::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999 }
    }
}

pub enum Optimizer {
    Sgd {
        lr: f64,
        momentum: f64,
        velocity: Vec<Tensor>,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
        m: Vec<Tensor>,
        v: Vec<Tensor>,
    },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::SgdMomentum { momentum } => {
                Optimizer::Sgd { lr, momentum, velocity: Vec::new() }
            }
            OptimizerKind::Adam { beta1, beta2 } => Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps: 1e-8,
                t: 0,
                m: Vec::new(),
                v: Vec::new(),
            },
        }
    }

    pub fn step(&mut self, params: &mut [&mut Param]) {
        match self {
            Optimizer::Sgd { lr, momentum, velocity } => {
                if velocity.is_empty() {
                    *velocity = params.iter().map(|p| Tensor::zeros(&p.value.shape)).collect();
                }
                for (p, vel) in params.iter_mut().zip(velocity.iter_mut()) {
                    for i in 0..p.value.data.len() {
                        vel.data[i] = *momentum * vel.data[i] + p.grad.data[i];
                        p.value.data[i] -= *lr * vel.data[i];
                    }
                }
            }
            Optimizer::Adam { lr, beta1, beta2, eps, t, m, v } => {
                if m.is_empty() {
                    *m = params.iter().map(|p| Tensor::zeros(&p.value.shape)).collect();
                    *v = params.iter().map(|p| Tensor::zeros(&p.value.shape)).collect();
                }
                *t += 1;
                let bc1 = 1.0 - beta1.powi(*t as i32);
                let bc2 = 1.0 - beta2.powi(*t as i32);
                for ((p, mi), vi) in params.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                    for i in 0..p.value.data.len() {
                        let g = p.grad.data[i];
                        mi.data[i] = *beta1 * mi.data[i] + (1.0 - *beta1) * g;
                        vi.data[i] = *beta2 * vi.data[i] + (1.0 - *beta2) * g * g;
                        let mhat = mi.data[i] / bc1;
                        let vhat = vi.data[i] / bc2;
                        p.value.data[i] -= *lr * mhat / (vhat.sqrt() + *eps);
                    }
                }
            }
        }
    }
}
