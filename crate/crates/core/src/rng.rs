//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream derived from
//! the experiment seed, so adding a consumer never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers. Values are part of the reproducibility contract.
pub mod stream {
    pub const GENERATOR: u64 = 1;
    pub const FEATURE_NOISE: u64 = 2;
    pub const SPLITS: u64 = 3;
    pub const PARTITION: u64 = 4;
    pub const CLUSTER: u64 = 5;
    pub const MODEL_INIT: u64 = 6;
    /// Trainer `i` samples from `TRAINER_BASE + i`.
    pub const TRAINER_BASE: u64 = 1 << 20;
    /// Per-trainer step-time jitter uses `JITTER_BASE + i`.
    pub const JITTER_BASE: u64 = 1 << 21;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
