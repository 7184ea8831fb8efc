//! Adam with bias correction.

use super::ModelWeights;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Optimizer state. Moments live alongside the weights they were built for
/// and survive weight overwrites, so a trainer keeps its moments across
/// aggregation rounds.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    t: u64,
    m: ModelWeights,
    v: ModelWeights,
}

impl Adam {
    pub fn new(lr: f64, like: &ModelWeights) -> Self {
        Self {
            lr,
            t: 0,
            m: like.zeros_like(),
            v: like.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, w: &mut ModelWeights, grads: &ModelWeights) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powf(self.t as f64);
        let c2 = 1.0 - BETA2.powf(self.t as f64);
        let lr = self.lr;
        for (((p, g), m), v) in w
            .tensors_mut()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
            }
        }
    }
}
