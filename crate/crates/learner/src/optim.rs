//! First-order optimizers over [`ParamSet`]s.

use serde::{Deserialize, Serialize};

use crate::tensor::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        Self::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub step: u64,
    /// First and second moments; present only for Adam.
    pub moments: Option<(ParamSet, ParamSet)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &ParamSet) -> Self {
        let moments = match kind {
            OptimizerKind::Sgd => None,
            OptimizerKind::Adam { .. } => Some((params.zeros_like(), params.zeros_like())),
        };
        Self { kind, step: 0, moments }
    }

    /// Descends along `grads` with step size `lr`.
    pub fn apply(&mut self, params: &mut ParamSet, grads: &ParamSet, lr: f64) {
        self.step += 1;
        match (self.kind, &mut self.moments) {
            (OptimizerKind::Adam { beta1, beta2, eps }, Some((m, v))) => {
                let c1 = 1.0 - beta1.powi(self.step as i32);
                let c2 = 1.0 - beta2.powi(self.step as i32);
                for (((p, g), mb), vb) in params.blocks.iter_mut().zip(&grads.blocks).zip(&mut m.blocks).zip(&mut v.blocks) {
                    for i in 0..p.data.len() {
                        let gi = g.data[i];
                        mb.data[i] = beta1 * mb.data[i] + (1.0 - beta1) * gi;
                        vb.data[i] = beta2 * vb.data[i] + (1.0 - beta2) * gi * gi;
                        let mhat = mb.data[i] / c1;
                        let vhat = vb.data[i] / c2;
                        p.data[i] -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
            _ => {
                for (p, g) in params.blocks.iter_mut().zip(&grads.blocks) {
                    p.data.iter_mut().zip(&g.data).for_each(|(p, g)| *p -= lr * g);
                }
            }
        }
    }
}
