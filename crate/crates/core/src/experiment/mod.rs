//! End-to-end experiments driven by a flat config: dataset construction,
//! partitioning, training in either mode, metrics files and failure sweeps.

mod config;
mod metrics;
mod pipeline;
mod sweep;

use thiserror::Error;

pub use config::{ClockKind, ExperimentConfig, Mode, SchemeName, TransportKind};
pub use metrics::{convergence_time, converged_losses, max_pairwise_gap, median, write_metrics};
pub use pipeline::{
    build_dataset, generate, join, make_partition, serve, split, train, Dataset, Evaluation,
    TrainResult,
};
pub use sweep::{failure_sets, failure_sweep, SweepRow, SweepSummary};

use crate::coordination::CoordError;
use crate::graph::GraphError;
use crate::nn::NnError;
use crate::partition::PartitionError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Coord(#[from] CoordError),
}
