//! Global gradient synchronization: every step averages one mini-batch
//! gradient per shard before a single shared Adam update.

use std::sync::Arc;
use std::time::Instant;

use super::clock::{to_secs, Participant};
use super::evaluator::{EvalFn, Evaluator};
use super::learner::{GnnLearner, StepCost};
use super::server::{RoundRecord, RunOutcome, ServerConfig, TrainerReport};
use super::CoordError;
use crate::graph::SplitTag;
use crate::nn::{aggregate_average, Adam, ModelWeights};
use crate::partition::TrainerId;

/// Runs GGS for `cfg.budget`, evaluating every `cfg.interval`.
///
/// Each shard draws its own mini-batch from the whole training graph. A
/// synchronized step lasts as long as its slowest shard; on the wall clock
/// shards run one after another in this thread.
pub fn run_ggs(
    part: &Participant,
    cfg: &ServerConfig,
    shards: &mut [GnnLearner],
    costs: &mut [StepCost],
    init: ModelWeights,
    lr: f64,
    eval: Option<EvalFn>,
) -> Result<RunOutcome, CoordError> {
    if shards.is_empty() || shards.len() != costs.len() {
        return Err(CoordError::Config(format!(
            "GGS needs one step cost per shard, got {} shards and {} costs",
            shards.len(),
            costs.len()
        )));
    }
    if cfg.interval == 0 {
        return Err(CoordError::Config("evaluation interval must be positive".into()));
    }
    let evaluator = eval.clone().map(|f| Evaluator::spawn(f, cfg.eval_queue));
    let result = drive(part, cfg, shards, costs, init, lr, evaluator.as_ref());
    let summary = evaluator.map(Evaluator::finish);
    let (rounds, global, t0) = result?;
    let mut outcome = RunOutcome {
        rounds,
        evals: Vec::new(),
        best_round: None,
        best_val_mrr: None,
        test_mrr: None,
        best_weights: Arc::clone(&global),
        final_weights: global,
        admitted: (0..shards.len() as TrainerId).collect(),
        departed: Vec::new(),
        t0_s: to_secs(t0),
    };
    if let (Some(summary), Some(eval)) = (summary, eval) {
        if let Some(e) = summary.error {
            return Err(CoordError::Eval(e));
        }
        outcome.evals = summary.records;
        if let Some((round, w, mrr)) = summary.best {
            outcome.test_mrr = Some(eval(&w, SplitTag::Test).map_err(CoordError::Eval)?);
            outcome.best_round = Some(round);
            outcome.best_val_mrr = Some(mrr);
            outcome.best_weights = w;
        }
    }
    Ok(outcome)
}

type Driven = (Vec<RoundRecord>, Arc<ModelWeights>, u64);

fn drive(
    part: &Participant,
    cfg: &ServerConfig,
    shards: &mut [GnnLearner],
    costs: &mut [StepCost],
    init: ModelWeights,
    lr: f64,
    evaluator: Option<&Evaluator>,
) -> Result<Driven, CoordError> {
    let t0 = part.now();
    let end = t0.saturating_add(cfg.budget);
    let mut w = init;
    let mut adam = Adam::new(lr, &w);
    if let Some(ev) = evaluator {
        ev.submit(0, 0.0, Arc::new(w.clone()));
    }
    let mut rounds = Vec::new();
    let mut next_eval = t0.saturating_add(cfg.interval);
    let mut steps = 0u64;
    let mut window = (0.0, 0u64);
    let mut ema: Option<f64> = None;
    while part.now() < end {
        let started = Instant::now();
        let mut grads = Vec::with_capacity(shards.len());
        let mut loss = 0.0;
        for shard in shards.iter_mut() {
            let (l, g) = shard.gradient(&w)?;
            loss += l;
            grads.push(g);
        }
        loss /= shards.len() as f64;
        let refs: Vec<&ModelWeights> = grads.iter().collect();
        adam.step(&mut w, &aggregate_average(&refs)?);
        if let Some(name) = w.first_non_finite() {
            return Err(CoordError::Diverged(format!("parameter {name} became non-finite")));
        }
        if part.is_mock() {
            let cost = costs.iter_mut().map(|c| c.next_virtual()).max().unwrap_or(0);
            part.sleep(cost);
        } else {
            // Each shard's share of the sequential compute.
            let per_shard = started.elapsed().as_nanos() as u64 / shards.len() as u64;
            let extra = costs
                .iter()
                .map(|c| c.real_extra(per_shard))
                .max()
                .unwrap_or(0);
            part.sleep(extra);
        }
        steps += 1;
        window.0 += loss;
        window.1 += 1;
        ema = Some(ema.map_or(loss, |e| e + 0.1 * (loss - e)));

        let now = part.now();
        if now >= next_eval && next_eval <= end {
            let round = rounds.len() as u64 + 1;
            let at = to_secs(now - t0);
            if let Some(ev) = evaluator {
                ev.submit(round, at, Arc::new(w.clone()));
            }
            let window_loss = window.0 / window.1 as f64;
            window = (0.0, 0);
            rounds.push(RoundRecord {
                round,
                fired_s: to_secs(next_eval - t0),
                completed_s: at,
                reports: (0..shards.len())
                    .map(|i| TrainerReport {
                        trainer: i as TrainerId,
                        steps,
                        window_loss,
                        ema_loss: ema.unwrap_or(f64::NAN),
                    })
                    .collect(),
            });
            while next_eval <= now {
                next_eval = next_eval.saturating_add(cfg.interval);
            }
        }
    }
    Ok((rounds, Arc::new(w), t0))
}
