//! `tma`: generate data, partition it, train with time-based model
//! aggregation or GGS, evaluate checkpoints and run the theory checks.
//!
//! Log verbosity follows the `TMA_LOG` environment variable (`warn` by
//! default), e.g. `TMA_LOG=info tma train ...`.

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tma_core::experiment::{ClockKind, ExperimentConfig, ExperimentError, Mode, SchemeName, TransportKind};
use tma_core::nn::EncoderKind;

#[derive(Debug)]
pub struct CliError(String);

impl CliError {
    pub fn msg(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

macro_rules! from_display {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self(e.to_string())
            }
        }
    )*};
}

from_display!(
    ExperimentError,
    tma_core::graph::GraphError,
    tma_core::partition::PartitionError,
    tma_core::nn::NnError,
    tma_core::eval::EvalError,
    tma_core::theory::TheoryError,
    tma_core::coordination::CoordError,
    std::io::Error,
    csv::Error
);

#[derive(Parser)]
#[command(name = "tma", version, about = "Time-based model aggregation for distributed GNN link prediction")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

/// Config file plus per-key overrides. Flags win over the file.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Flat TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    mean_degree: Option<f64>,
    #[arg(long)]
    homophily: Option<f64>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    /// random, super or mincut.
    #[arg(long)]
    scheme: Option<SchemeName>,
    #[arg(long)]
    trainers: Option<usize>,
    /// Super-node count for the super scheme.
    #[arg(long)]
    clusters: Option<usize>,
    /// gcn, sage or mlp.
    #[arg(long)]
    encoder: Option<EncoderKind>,
    /// tma or ggs.
    #[arg(long)]
    mode: Option<Mode>,
    /// Aggregation interval in seconds.
    #[arg(long)]
    interval: Option<f64>,
    /// Training budget in seconds.
    #[arg(long)]
    budget: Option<f64>,
    /// Trainers that never start, numbered from 1 (e.g. 1,3).
    #[arg(long, value_delimiter = ',')]
    fail_ids: Option<Vec<usize>>,
    /// mock or real.
    #[arg(long)]
    clock: Option<ClockKind>,
    /// local or tcp.
    #[arg(long)]
    transport: Option<TransportKind>,
    /// Virtual seconds per step under the mock clock.
    #[arg(long)]
    step_cost: Option<f64>,
    /// Per-trainer slowdown factors (e.g. 1,2,1).
    #[arg(long, value_delimiter = ',')]
    slowdowns: Option<Vec<f64>>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {$(
                if let Some(v) = self.$flag.clone() {
                    c.$field = v;
                }
            )*};
        }
        set!(seed => seed, nodes => num_nodes, mean_degree => mean_degree, homophily => homophily,
            classes => classes, negatives => negatives, scheme => scheme, trainers => trainers,
            clusters => clusters, encoder => encoder, mode => mode, interval => interval_s,
            budget => budget_s, fail_ids => fail_ids, clock => clock, transport => transport,
            step_cost => step_cost_s, slowdowns => slowdowns);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic homophilic graph with labels and features.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dir: PathBuf,
    },
    /// Hold out validation and test edges with fixed negatives.
    Split {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dir: PathBuf,
    },
    /// Partition the training graph and print partition statistics.
    Partition {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dir: PathBuf,
    },
    /// Train; builds the dataset in memory unless --dir holds artifacts.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Metrics CSV output.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Where to save the best weights.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Validation and test MRR of saved weights.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long)]
        weights: PathBuf,
    },
    /// Check the closed-form analysis against generated graphs.
    TheoryCheck {
        #[arg(long, default_value_t = 4000)]
        nodes: usize,
        #[arg(long, default_value_t = 10.0)]
        mean_degree: f64,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Homophily values: `start:end:step` or a comma list.
        #[arg(long = "grid-h", alias = "h", default_value = "0.6,0.8,0.95", value_parser = parse_grid)]
        h: Grid,
        /// Partition mixes, same syntax.
        #[arg(long = "grid-beta", alias = "beta", default_value = "0.5,0.75,1.0", value_parser = parse_grid)]
        beta: Grid,
        /// Per-grid-point CSV report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train once per choice of failed trainers and average.
    FailureSweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Failure counts to sweep.
        #[arg(long, value_delimiter = ',', default_value = "0,1")]
        f: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-trainer converged training loss and its spread, per scheme.
    LossGap {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "random,mincut")]
        schemes: Vec<SchemeName>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the server of a multi-process TCP run.
    Serve {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:7070")]
        listen: String,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Run one trainer of a multi-process TCP run.
    Join {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:7070")]
        connect: String,
        /// Trainer number, from 1.
        #[arg(long)]
        trainer: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Grid(Vec<f64>);

/// Parses `start:end:step` (end inclusive) or `a,b,c`.
fn parse_grid(s: &str) -> Result<Grid, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number {t:?}"));
    if let [a, b, step] = s.split(':').collect::<Vec<_>>()[..] {
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if !(step > 0.0) || b < a {
            return Err(format!("range {s:?} needs start <= end and a positive step"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        // Rounded so that 0.5:1.0:0.1 yields 0.6 rather than 0.6000000000000001.
        return Ok(Grid((0..=n).map(|i| ((a + step * i as f64) * 1e9).round() / 1e9).collect()));
    }
    s.split(',').map(num).collect::<Result<_, _>>().map(Grid)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("TMA_LOG", "warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError(msg)) => {
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
