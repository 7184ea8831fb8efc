//! Dense tensors, GNN encoders, the link decoder, losses and Adam.
//!
//! Everything runs in `f64` on one thread. Backward passes are written by
//! hand and checked against central differences in the tests.

mod adam;
mod loss;
mod model;
mod tensor;
mod weights;

use thiserror::Error;

pub use adam::Adam;
pub use loss::{loss_bce, loss_l2, sigmoid};
pub use model::{BlockRef, DecoderTrace, EncoderKind, EncoderTrace, Model, ModelConfig};
pub use tensor::Tensor;
pub use weights::{aggregate_average, ModelWeights};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value produced by {stage} layer {layer}")]
    NonFinite { stage: &'static str, layer: usize },
    #[error("weights fingerprint {found:#018x} does not match model {expected:#018x}")]
    FingerprintMismatch { expected: u64, found: u64 },
    #[error("cannot average an empty list of weights")]
    EmptyAggregate,
}
