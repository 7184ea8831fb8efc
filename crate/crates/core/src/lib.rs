//! Time-based model aggregation (TMA) for distributed GNN link prediction.
//!
//! Independent trainers run local SGD on disjoint node-induced subgraphs and
//! a server periodically replaces every trainer's weights with their average.
//! The crate bundles everything needed to run that protocol at desk scale:
//!
//! * [`graph`]: CSR graph storage, the compatibility-matrix generator, edge
//!   splits with fixed evaluation negatives, and the binary file formats.
//! * [`partition`]: random-node, super-node and min-cut partitioning, induced
//!   subgraphs and partition statistics.
//! * [`nn`]: dense tensors, GCN / GraphSAGE / MLP encoders, the MLP decoder,
//!   losses, hand-written backward passes and Adam.
//! * [`sampling`]: mini-batches with tail corruption and neighbor-sampled
//!   message flow graphs.
//! * [`coordination`]: server and trainer loops, the key-value flags, the
//!   in-process and TCP transports, a deterministic virtual clock, GGS mode
//!   and failure injection.
//! * [`eval`]: MRR over fixed negatives.
//! * [`theory`]: closed forms for the two-class homophily analysis plus the
//!   Monte Carlo estimators that tie them to the running system.
//! * [`experiment`]: the flat experiment config and the end-to-end pipeline
//!   used by the CLI.

pub mod coordination;
pub mod eval;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod nn;
pub mod partition;
pub mod rng;
pub mod sampling;
pub mod theory;
