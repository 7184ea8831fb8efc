//! The trainer loop.

use std::sync::Arc;
use std::time::Instant;

use super::clock::{Participant, Predicate};
use super::learner::{LocalLearner, StepCost};
use super::trace::{EventKind, Trace};
use super::transport::TrainerEndpoints;
use super::wire::WeightsMsg;
use super::CoordError;
use crate::partition::TrainerId;

/// Smoothing factor of the reported loss EMA.
const EMA_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainerExit {
    /// Saw the stop flag.
    Stopped,
    /// The server closed the connection.
    ServerGone,
    /// Injected crash.
    Crashed,
    /// Stopped before receiving initial weights.
    NotAdmitted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerOutcome {
    pub trainer: TrainerId,
    pub steps: u64,
    /// Rounds whose global weights this trainer received.
    pub rounds: u64,
    pub exit: TrainerExit,
}

/// Runs one trainer until stop. With `crash_at = Some(r)` the trainer
/// leaves without submitting when it sees the flag for round `r`.
///
/// The outbound channel is always closed on return so the server never
/// waits on a trainer that is gone.
pub fn run_trainer<L: LocalLearner + ?Sized>(
    part: &Participant,
    ep: &TrainerEndpoints,
    learner: &mut L,
    cost: &mut StepCost,
    crash_at: Option<u64>,
    trace: &Trace,
) -> Result<TrainerOutcome, CoordError> {
    let result = train(part, ep, learner, cost, crash_at, trace);
    ep.close();
    result
}

fn train<L: LocalLearner + ?Sized>(
    part: &Participant,
    ep: &TrainerEndpoints,
    learner: &mut L,
    cost: &mut StepCost,
    crash_at: Option<u64>,
    trace: &Trace,
) -> Result<TrainerOutcome, CoordError> {
    let id = ep.id;
    let mut out = TrainerOutcome {
        trainer: id,
        steps: 0,
        rounds: 0,
        exit: TrainerExit::Stopped,
    };
    let inbox_or_stop: Predicate = {
        let kv = Arc::clone(&ep.kv);
        let inbox = Arc::clone(&ep.inbox);
        Arc::new(move || !inbox.is_empty() || inbox.is_closed() || kv.stop())
    };
    let inbox_readable = ep.inbox.readable();

    ep.kv.set_ready(id);
    part.wait_for(inbox_or_stop, None);
    let Some(first) = ep.inbox.pop() else {
        out.exit = TrainerExit::NotAdmitted;
        return Ok(out);
    };
    learner.overwrite(&first.weights);
    let mut round = first.round;

    let degenerate = learner.degenerate();
    let agg_or_stop: Predicate = {
        let kv = Arc::clone(&ep.kv);
        Arc::new(move || kv.agg() || kv.stop())
    };
    let mut window = (0.0, 0u64);
    let mut ema: Option<f64> = None;
    loop {
        let seq = trace.reserve();
        if ep.kv.stop() {
            break;
        }
        if degenerate {
            // Nothing to train on: wait for the flag and echo the weights.
            part.wait_for(Arc::clone(&agg_or_stop), None);
            if ep.kv.stop() {
                break;
            }
        } else {
            trace.record_at(seq, EventKind::Step { trainer: id });
            let started = Instant::now();
            let loss = learner.step()?;
            if part.is_mock() {
                part.sleep(cost.next_virtual());
            } else {
                part.sleep(cost.real_extra(started.elapsed().as_nanos() as u64));
            }
            out.steps += 1;
            window.0 += loss;
            window.1 += 1;
            ema = Some(ema.map_or(loss, |e| e + EMA_ALPHA * (loss - e)));
        }
        if !ep.kv.agg() {
            continue;
        }
        if crash_at == Some(round) {
            out.exit = TrainerExit::Crashed;
            return Ok(out);
        }
        let window_loss = if window.1 > 0 { window.0 / window.1 as f64 } else { f64::NAN };
        window = (0.0, 0);
        ep.outbound.send(WeightsMsg {
            round,
            trainer: id,
            steps: out.steps,
            window_loss,
            ema_loss: ema.unwrap_or(f64::NAN),
            weights: Arc::new(learner.weights().clone()),
        });
        part.wait_for(Arc::clone(&inbox_readable), None);
        let Some(global) = ep.inbox.pop() else {
            out.exit = TrainerExit::ServerGone;
            return Ok(out);
        };
        if global.round != round + 1 {
            return Err(CoordError::Protocol(format!(
                "trainer {id} expected round {} but received {}",
                round + 1,
                global.round
            )));
        }
        learner.overwrite(&global.weights);
        round = global.round;
        out.rounds += 1;
    }
    Ok(out)
}
