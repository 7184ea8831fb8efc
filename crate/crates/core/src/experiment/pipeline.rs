//! Generate, split, partition, train and evaluate.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use log::info;

use super::config::{ClockKind, ExperimentConfig, Mode, TransportKind};
use super::metrics::convergence_time;
use super::ExperimentError;
use crate::coordination::{
    run_ggs, run_local, run_server, run_tcp, run_trainer, transport, Clock, EvalFn,
    GnnLearner, RunOutcome, StepCost, Trace, TrainerOutcome, TrainerSetup,
};
use crate::eval::evaluate;
use crate::graph::{
    add_feature_noise, build_splits, generate_synthetic, EdgeSplits, FeatureMatrix, Graph,
    NodeLabels, SplitSpec, SyntheticSpec,
};
use crate::nn::{Model, ModelWeights, Tensor};
use crate::partition::{induce_subgraphs, partition_with_scheme, Partition, Subgraph, TrainerId};
use crate::sampling::features_tensor;

/// Everything derived from the graph before training. Immutable once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub labels: NodeLabels,
    /// `graph` minus the validation and test positives.
    pub train_graph: Graph,
    pub splits: EdgeSplits,
}

/// Generated graph, labels and (noisy) features.
pub fn generate(cfg: &ExperimentConfig) -> Result<(Graph, FeatureMatrix, NodeLabels), ExperimentError> {
    let sg = generate_synthetic(&SyntheticSpec {
        num_nodes: cfg.num_nodes,
        mean_degree: cfg.mean_degree,
        homophily: cfg.homophily,
        classes: cfg.classes,
        seed: cfg.seed,
    })?;
    let features = add_feature_noise(&sg.features, cfg.noise_dims, cfg.noise_scale, cfg.seed)?;
    Ok((sg.graph, features, sg.labels))
}

pub fn split(cfg: &ExperimentConfig, graph: &Graph) -> Result<(Graph, EdgeSplits), ExperimentError> {
    Ok(build_splits(
        graph,
        &SplitSpec {
            val_frac: cfg.val_frac,
            test_frac: cfg.test_frac,
            negatives: cfg.negatives,
            seed: cfg.seed,
        },
    )?)
}

pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset, ExperimentError> {
    cfg.validate()?;
    let (graph, features, labels) = generate(cfg)?;
    let (train_graph, splits) = split(cfg, &graph)?;
    Ok(Dataset {
        graph,
        features,
        labels,
        train_graph,
        splits,
    })
}

pub fn make_partition(cfg: &ExperimentConfig, train_graph: &Graph) -> Result<Partition, ExperimentError> {
    Ok(partition_with_scheme(
        train_graph,
        cfg.partition_scheme(),
        cfg.trainers,
        cfg.seed,
    )?)
}

/// The model and its evaluation closure for a dataset.
pub struct Evaluation {
    pub model: Arc<Model>,
    features: Arc<Tensor>,
    dataset: Arc<Dataset>,
}

impl Evaluation {
    pub fn new(cfg: &ExperimentConfig, dataset: Arc<Dataset>) -> Result<Self, ExperimentError> {
        let model = Arc::new(Model::new(&cfg.model_config(dataset.features.cols()))?);
        let features = Arc::new(features_tensor(&dataset.features));
        Ok(Self {
            model,
            features,
            dataset,
        })
    }

    /// Validation and test MRR on the full training graph.
    pub fn eval_fn(&self) -> EvalFn {
        let model = Arc::clone(&self.model);
        let x = Arc::clone(&self.features);
        let ds = Arc::clone(&self.dataset);
        Arc::new(move |w, tag| {
            evaluate(&model, w, &ds.train_graph, &x, &ds.splits, tag, 0)
                .map(|r| r.mrr)
                .map_err(|e| e.to_string())
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub outcome: RunOutcome,
    /// Per slot; `None` for failed trainers and in GGS mode.
    pub trainers: Vec<Option<TrainerOutcome>>,
    pub trainer_errors: Vec<(TrainerId, String)>,
    /// Seconds from the start until validation MRR is within 1% of its
    /// maximum.
    pub convergence_s: Option<f64>,
}

fn clock_for(cfg: &ExperimentConfig) -> Clock {
    match cfg.clock {
        ClockKind::Mock => Clock::mock(),
        ClockKind::Real => Clock::real(),
    }
}

fn step_cost(cfg: &ExperimentConfig, i: usize) -> StepCost {
    StepCost::new(cfg.step_cost_s, cfg.slowdown(i), cfg.jitter, cfg.seed, i as u64)
}

/// Trains in the configured mode. TMA needs a partition of the training
/// graph; GGS ignores it.
pub fn train(
    cfg: &ExperimentConfig,
    dataset: &Arc<Dataset>,
    partition: Option<&Partition>,
) -> Result<TrainResult, ExperimentError> {
    cfg.validate()?;
    let ev = Evaluation::new(cfg, Arc::clone(dataset))?;
    let init = ev.model.init();
    let eval = cfg.evaluate.then(|| ev.eval_fn());
    let batch = cfg.batch_size;
    let fanouts = cfg.fanout_list()?;
    let result = match cfg.mode {
        Mode::Tma => {
            let owned;
            let partition = match partition {
                Some(p) => p,
                None => {
                    owned = make_partition(cfg, &dataset.train_graph)?;
                    &owned
                }
            };
            if partition.num_parts() != cfg.trainers {
                return Err(ExperimentError::Config(vec![format!(
                    "partition has {} parts but trainers is {}",
                    partition.num_parts(),
                    cfg.trainers
                )]));
            }
            let subs = induce_subgraphs(&dataset.train_graph, &dataset.features, partition)?;
            let setups: Vec<_> = subs
                .into_iter()
                .enumerate()
                .map(|(i, sub)| TrainerSetup {
                    learner: GnnLearner::new(
                        Arc::clone(&ev.model),
                        Arc::new(sub),
                        init.clone(),
                        batch,
                        fanouts.clone(),
                        cfg.seed,
                    ),
                    cost: step_cost(cfg, i),
                })
                .collect();
            let session = cfg.session();
            let out = match cfg.transport {
                TransportKind::Local => run_local(&clock_for(cfg), &session, setups, init, eval)?,
                TransportKind::Tcp => run_tcp(&session, setups, init, eval)?,
            };
            TrainResult {
                convergence_s: convergence_time(&out.run.evals),
                outcome: out.run,
                trainers: out.trainers,
                trainer_errors: out.trainer_errors,
            }
        }
        Mode::Ggs => {
            let mut shards: Vec<GnnLearner> = (0..cfg.trainers)
                .map(|i| {
                    let mut sub = Subgraph::whole(&dataset.train_graph, &dataset.features);
                    sub.trainer = i as TrainerId;
                    GnnLearner::new(Arc::clone(&ev.model), Arc::new(sub), init.clone(), batch, fanouts.clone(), cfg.seed)
                })
                .collect();
            let mut costs: Vec<StepCost> = (0..cfg.trainers).map(|i| step_cost(cfg, i)).collect();
            let clock = clock_for(cfg);
            let part = clock.participant();
            part.start();
            let run = run_ggs(
                &part,
                &cfg.session().server_config(),
                &mut shards,
                &mut costs,
                init,
                cfg.lr,
                eval,
            )?;
            TrainResult {
                convergence_s: convergence_time(&run.evals),
                outcome: run,
                trainers: vec![None; cfg.trainers],
                trainer_errors: Vec::new(),
            }
        }
    };
    info!(
        "{} run finished: {} rounds, best val MRR {:?}, test MRR {:?}",
        cfg.mode,
        result.outcome.rounds_completed(),
        result.outcome.best_val_mrr,
        result.outcome.test_mrr
    );
    Ok(result)
}

/// Runs only the server over TCP on the wall clock. `on_bound` receives the
/// listening address before trainers are awaited.
pub fn serve(
    cfg: &ExperimentConfig,
    dataset: &Arc<Dataset>,
    addr: &str,
    on_bound: impl FnOnce(SocketAddr),
) -> Result<RunOutcome, ExperimentError> {
    cfg.validate()?;
    let ev = Evaluation::new(cfg, Arc::clone(dataset))?;
    let (ep, server) = transport::tcp_server(addr, cfg.trainers)?;
    on_bound(server.local_addr());
    let clock = Clock::real();
    let part = clock.participant();
    let out = run_server(
        &part,
        &cfg.session().server_config(),
        &ep,
        ev.model.init(),
        cfg.evaluate.then(|| ev.eval_fn()),
        &Trace::new(false),
    )?;
    drop(server);
    Ok(out)
}

/// Runs trainer `trainer` (numbered from 0) of the configured partition
/// against a remote server.
pub fn join(
    cfg: &ExperimentConfig,
    dataset: &Arc<Dataset>,
    partition: &Partition,
    addr: &str,
    trainer: TrainerId,
) -> Result<TrainerOutcome, ExperimentError> {
    cfg.validate()?;
    if trainer as usize >= partition.num_parts() {
        return Err(ExperimentError::Config(vec![format!(
            "trainer {} outside 1..={}",
            trainer as usize + 1,
            partition.num_parts()
        )]));
    }
    let model = Arc::new(Model::new(&cfg.model_config(dataset.features.cols()))?);
    let mut subs = induce_subgraphs(&dataset.train_graph, &dataset.features, partition)?;
    let sub = subs.swap_remove(trainer as usize);
    let init: ModelWeights = model.init();
    let mut learner = GnnLearner::new(model, Arc::new(sub), init, cfg.batch_size, cfg.fanout_list()?, cfg.seed);
    let timeout = Duration::from_secs_f64(cfg.ready_timeout_s.max(1.0));
    let ep = transport::tcp_trainer(addr, trainer, timeout)?;
    let part = Clock::real().participant();
    Ok(run_trainer(
        &part,
        &ep,
        &mut learner,
        &mut step_cost(cfg, trainer as usize),
        None,
        &Trace::new(false),
    )?)
}
