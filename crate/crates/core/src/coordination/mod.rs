//! The aggregation protocol: a server that averages trainer weights on a
//! fixed time grid, trainers that run local steps in between, and the GGS
//! baseline that synchronizes every step.
//!
//! All timing goes through [`clock::Participant`], so the same loops run on
//! the wall clock or on the deterministic virtual clock used by tests and
//! failure sweeps.

pub mod clock;
mod evaluator;
mod ggs;
pub mod kv;
pub mod learner;
pub mod mailbox;
mod server;
mod session;
pub mod trace;
pub mod transport;
mod trainer;
pub mod wire;

use thiserror::Error;

use crate::io::FormatError;
use crate::nn::NnError;
use crate::partition::TrainerId;
use crate::sampling::SamplingError;

pub use clock::{from_secs, to_secs, Clock, Nanos, Participant};
pub use evaluator::{EvalFn, EvalRecord};
pub use ggs::run_ggs;
pub use learner::{GnnLearner, LocalLearner, StepCost};
pub use server::{run_server, RoundRecord, RunOutcome, ServerConfig, TrainerReport};
pub use session::{run_local, run_tcp, SessionConfig, SessionOutcome, TrainerSetup};
pub use trace::{check_trace, Event, EventKind, Trace, TraceCheck};
pub use trainer::{run_trainer, TrainerExit, TrainerOutcome};

#[derive(Debug, Error)]
pub enum CoordError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("no trainer became ready before the readiness timeout")]
    NoTrainers,
    #[error("every trainer left before round {round} completed")]
    AllTrainersDead { round: u64 },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Eval(String),
    #[error("trainer {0} panicked")]
    TrainerPanicked(TrainerId),
}
