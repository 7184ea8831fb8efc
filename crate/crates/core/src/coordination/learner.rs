//! What a trainer runs between aggregation rounds, and what each local step
//! costs on the virtual clock.

use std::sync::Arc;

use rand::Rng as _;

use super::clock::{from_secs, Nanos};
use super::CoordError;
use crate::nn::{Adam, Model, ModelWeights};
use crate::partition::Subgraph;
use crate::rng::{self, Rng};
use crate::sampling::{sample_minibatch, Fanout};

/// A local optimizer over private data.
pub trait LocalLearner: Send {
    fn weights(&self) -> &ModelWeights;
    fn overwrite(&mut self, w: &ModelWeights);
    /// One optimizer step; returns the mini-batch loss.
    fn step(&mut self) -> Result<f64, CoordError>;
    /// True if the learner has no data and can only echo weights.
    fn degenerate(&self) -> bool {
        false
    }
}

/// Mini-batch Adam on one trainer's subgraph.
pub struct GnnLearner {
    model: Arc<Model>,
    sub: Arc<Subgraph>,
    weights: ModelWeights,
    adam: Adam,
    rng: Rng,
    batch_size: usize,
    fanouts: Vec<Fanout>,
}

impl GnnLearner {
    /// The sampling stream is keyed by the subgraph's trainer id, so a
    /// trainer draws the same batches whatever slot it runs in.
    pub fn new(
        model: Arc<Model>,
        sub: Arc<Subgraph>,
        init: ModelWeights,
        batch_size: usize,
        fanouts: Vec<Fanout>,
        seed: u64,
    ) -> Self {
        let adam = Adam::new(model.config().lr, &init);
        let rng = rng::seeded(seed, rng::stream::TRAINER_BASE + sub.trainer as u64);
        Self {
            model,
            sub,
            weights: init,
            adam,
            rng,
            batch_size,
            fanouts,
        }
    }

    /// Loss and gradient of one fresh mini-batch at `w`, without updating.
    pub fn gradient(&mut self, w: &ModelWeights) -> Result<(f64, ModelWeights), CoordError> {
        let batch = sample_minibatch(&self.sub, self.batch_size, &self.fanouts, &mut self.rng)?;
        let mut grads = w.zeros_like();
        let loss = self.model.link_loss_and_grad(
            w,
            &batch.mfg.block_refs(),
            batch.mfg.gather(&self.sub.features),
            &batch.pairs,
            &batch.labels,
            &mut grads,
        )?;
        Ok((loss, grads))
    }
}

impl LocalLearner for GnnLearner {
    fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    fn overwrite(&mut self, w: &ModelWeights) {
        self.weights.clone_from(w);
    }

    fn step(&mut self) -> Result<f64, CoordError> {
        let w = std::mem::replace(&mut self.weights, ModelWeights::new(0, Vec::new()));
        let result = self.gradient(&w);
        self.weights = w;
        let (loss, grads) = result?;
        self.adam.step(&mut self.weights, &grads);
        if let Some(name) = self.weights.first_non_finite() {
            return Err(CoordError::Diverged(format!("parameter {name} became non-finite")));
        }
        Ok(loss)
    }

    fn degenerate(&self) -> bool {
        self.sub.train_edges.is_empty()
    }
}

/// Virtual duration of each local step: `base * slowdown`, optionally
/// scaled by a uniform factor in `[1 - jitter, 1 + jitter]`. Under the wall
/// clock only `slowdown` matters: the trainer idles for `slowdown - 1`
/// times its measured compute.
#[derive(Debug, Clone)]
pub struct StepCost {
    pub base: f64,
    pub slowdown: f64,
    pub jitter: f64,
    rng: Rng,
}

impl StepCost {
    pub fn new(base: f64, slowdown: f64, jitter: f64, seed: u64, trainer: u64) -> Self {
        Self {
            base,
            slowdown,
            jitter,
            rng: rng::seeded(seed, rng::stream::JITTER_BASE + trainer),
        }
    }

    pub fn next_virtual(&mut self) -> Nanos {
        let mut s = self.base * self.slowdown;
        if self.jitter > 0.0 {
            s *= 1.0 + self.rng.random_range(-self.jitter..=self.jitter);
        }
        from_secs(s)
    }

    pub fn real_extra(&self, measured: Nanos) -> Nanos {
        ((self.slowdown - 1.0).max(0.0) * measured as f64) as Nanos
    }
}
