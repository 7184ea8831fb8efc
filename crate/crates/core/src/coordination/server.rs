//! The aggregation server.

use std::sync::Arc;

use log::{info, warn};

use super::clock::{to_secs, Nanos, Participant, Predicate};
use super::evaluator::{EvalFn, EvalRecord, Evaluator};
use super::mailbox::Mailbox;
use super::trace::{EventKind, Trace};
use super::transport::{Outbound, ServerEndpoints};
use super::wire::{GlobalMsg, WeightsMsg};
use super::CoordError;
use crate::graph::SplitTag;
use crate::nn::{aggregate_average, ModelWeights};
use crate::partition::TrainerId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    /// Training budget measured from the moment every trainer is ready.
    pub budget: Nanos,
    /// Aggregation interval; round `t` fires at `T0 + t * interval`.
    pub interval: Nanos,
    /// How long to wait for trainers to report ready.
    pub ready_timeout: Nanos,
    /// Pending evaluations before the server blocks on the evaluator.
    pub eval_queue: usize,
}

/// What one trainer reported with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerReport {
    pub trainer: TrainerId,
    pub steps: u64,
    pub window_loss: f64,
    pub ema_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// Round number of the weights produced by this aggregation.
    pub round: u64,
    /// Seconds since `T0` when the flag was raised.
    pub fired_s: f64,
    /// Seconds since `T0` when the new weights went out.
    pub completed_s: f64,
    pub reports: Vec<TrainerReport>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rounds: Vec<RoundRecord>,
    /// Validation MRR per evaluated round, round 0 included.
    pub evals: Vec<EvalRecord>,
    pub best_round: Option<u64>,
    pub best_val_mrr: Option<f64>,
    /// Test MRR of the best round's weights.
    pub test_mrr: Option<f64>,
    /// Best validated weights, or the final weights without an evaluator.
    pub best_weights: Arc<ModelWeights>,
    pub final_weights: Arc<ModelWeights>,
    /// Trainers admitted after the readiness wait.
    pub admitted: Vec<TrainerId>,
    /// Admitted trainers that left before the end.
    pub departed: Vec<TrainerId>,
    /// Clock reading at `T0`, in seconds.
    pub t0_s: f64,
}

impl RunOutcome {
    pub fn rounds_completed(&self) -> u64 {
        self.rounds.last().map_or(0, |r| r.round)
    }
}

pub(crate) struct Finished {
    pub rounds: Vec<RoundRecord>,
    pub global: Arc<ModelWeights>,
    pub admitted: Vec<TrainerId>,
    pub departed: Vec<TrainerId>,
    pub t0: Nanos,
}

/// Runs the server loop on `part` and returns once the budget is spent.
///
/// Whatever happens, on return the stop flag is set and every trainer has
/// been told, so no trainer is left blocked on the server.
pub fn run_server(
    part: &Participant,
    cfg: &ServerConfig,
    ep: &ServerEndpoints,
    init: ModelWeights,
    eval: Option<EvalFn>,
    trace: &Trace,
) -> Result<RunOutcome, CoordError> {
    let evaluator = eval.clone().map(|f| Evaluator::spawn(f, cfg.eval_queue));
    let result = serve(part, cfg, ep, init, evaluator.as_ref(), trace);
    ep.kv.set_agg(false);
    ep.kv.set_stop();
    trace.record(EventKind::Stop);
    for out in &ep.outbound {
        match out {
            Outbound::Local(mb) => mb.close(),
            Outbound::Tcp(_) => out.send_stop(),
        }
    }
    let summary = evaluator.map(Evaluator::finish);
    let fin = result?;
    let mut outcome = RunOutcome {
        rounds: fin.rounds,
        evals: Vec::new(),
        best_round: None,
        best_val_mrr: None,
        test_mrr: None,
        best_weights: Arc::clone(&fin.global),
        final_weights: fin.global,
        admitted: fin.admitted,
        departed: fin.departed,
        t0_s: to_secs(fin.t0),
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

fn serve(
    part: &Participant,
    cfg: &ServerConfig,
    ep: &ServerEndpoints,
    init: ModelWeights,
    evaluator: Option<&Evaluator>,
    trace: &Trace,
) -> Result<Finished, CoordError> {
    if cfg.interval == 0 {
        return Err(CoordError::Config("aggregation interval must be positive".into()));
    }
    let m = ep.inbox.len();
    let kv = Arc::clone(&ep.kv);
    let all_ready: Predicate = {
        let kv = Arc::clone(&kv);
        Arc::new(move || (0..m).all(|i| kv.is_ready(i as TrainerId)))
    };
    let deadline = part.now().saturating_add(cfg.ready_timeout);
    part.wait_for(all_ready, Some(deadline));
    let mut alive: Vec<bool> = (0..m).map(|i| kv.is_ready(i as TrainerId)).collect();
    let admitted: Vec<TrainerId> = (0..m).filter(|&i| alive[i]).map(|i| i as TrainerId).collect();
    if admitted.is_empty() {
        return Err(CoordError::NoTrainers);
    }
    if admitted.len() < m {
        warn!("{} of {m} trainers ready; continuing without the rest", admitted.len());
    }

    let t0 = part.now();
    let since_t0 = |t: Nanos| to_secs(t - t0);
    let mut global = Arc::new(init);
    for &i in &admitted {
        ep.outbound[i as usize].send(GlobalMsg {
            round: 0,
            weights: Arc::clone(&global),
        });
    }
    if let Some(ev) = evaluator {
        ev.submit(0, 0.0, Arc::clone(&global));
    }

    let end = t0.saturating_add(cfg.budget);
    let mut rounds = Vec::new();
    let mut departed = Vec::new();
    let mut t: u64 = 0;
    loop {
        let fire = t0.saturating_add((t + 1).saturating_mul(cfg.interval));
        if fire > end {
            break;
        }
        part.sleep_until(fire);
        kv.set_agg(true);
        let fired = part.now();

        let live: Vec<usize> = (0..m).filter(|&i| alive[i]).collect();
        let boxes: Vec<Arc<Mailbox<WeightsMsg>>> =
            live.iter().map(|&i| Arc::clone(&ep.inbox[i])).collect();
        part.wait_for(
            Arc::new(move || boxes.iter().all(|b| !b.is_empty() || b.is_closed())),
            None,
        );

        let mut reports = Vec::with_capacity(live.len());
        let mut submitted = Vec::with_capacity(live.len());
        for &i in &live {
            let Some(msg) = ep.inbox[i].pop() else {
                warn!("trainer {i} left during round {t}");
                alive[i] = false;
                departed.push(i as TrainerId);
                continue;
            };
            if msg.round != t || msg.trainer as usize != i {
                return Err(CoordError::Protocol(format!(
                    "slot {i} received weights for round {} from trainer {} during round {t}",
                    msg.round, msg.trainer
                )));
            }
            trace.record(EventKind::Submit {
                trainer: msg.trainer,
                round: msg.round,
            });
            reports.push(TrainerReport {
                trainer: msg.trainer,
                steps: msg.steps,
                window_loss: msg.window_loss,
                ema_loss: msg.ema_loss,
            });
            submitted.push(msg.weights);
        }
        kv.set_agg(false);
        if submitted.is_empty() {
            return Err(CoordError::AllTrainersDead { round: t });
        }
        let refs: Vec<&ModelWeights> = submitted.iter().map(|w| w.as_ref()).collect();
        global = Arc::new(aggregate_average(&refs)?);
        t += 1;
        for (i, out) in ep.outbound.iter().enumerate() {
            if alive[i] {
                out.send(GlobalMsg {
                    round: t,
                    weights: Arc::clone(&global),
                });
            }
        }
        let completed = part.now();
        if let Some(ev) = evaluator {
            ev.submit(t, since_t0(completed), Arc::clone(&global));
        }
        info!(
            "round {t}: {} trainers, fired {:.3}s, completed {:.3}s",
            reports.len(),
            since_t0(fired),
            since_t0(completed)
        );
        rounds.push(RoundRecord {
            round: t,
            fired_s: since_t0(fired),
            completed_s: since_t0(completed),
            reports,
        });
    }
    part.sleep_until(end);
    Ok(Finished {
        rounds,
        global,
        admitted,
        departed,
        t0,
    })
}
