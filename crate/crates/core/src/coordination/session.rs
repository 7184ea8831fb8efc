//! In-process runs: one thread per trainer plus the server on the calling
//! thread, over local mailboxes or loopback TCP.

use std::collections::HashSet;
use std::thread;
use std::time::Duration;

use super::clock::{from_secs, Clock};
use super::evaluator::EvalFn;
use super::learner::{LocalLearner, StepCost};
use super::server::{run_server, RunOutcome, ServerConfig};
use super::trace::{Event, Trace};
use super::trainer::{run_trainer, TrainerOutcome};
use super::transport::{self, TrainerEndpoints};
use super::CoordError;
use crate::nn::ModelWeights;
use crate::partition::TrainerId;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub budget_s: f64,
    pub interval_s: f64,
    pub ready_timeout_s: f64,
    pub eval_queue: usize,
    /// Trainer slots that never start.
    pub failed: Vec<TrainerId>,
    /// `(trainer, round)`: the trainer leaves when it sees that round's flag.
    pub crashes: Vec<(TrainerId, u64)>,
    pub trace: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            budget_s: 30.0,
            interval_s: 5.0,
            ready_timeout_s: 10.0,
            eval_queue: 64,
            failed: Vec::new(),
            crashes: Vec::new(),
            trace: false,
        }
    }
}

impl SessionConfig {
    /// Lists every problem with the configuration for `m` trainers.
    pub fn validate(&self, m: usize) -> Result<(), CoordError> {
        let mut errs = Vec::new();
        if m == 0 {
            errs.push("at least one trainer is required".to_string());
        }
        if !(self.interval_s > 0.0 && self.interval_s.is_finite()) {
            errs.push(format!("interval must be positive, got {}", self.interval_s));
        }
        if !(self.budget_s.is_finite() && self.interval_s < self.budget_s) {
            errs.push(format!(
                "interval {} must be shorter than the budget {}",
                self.interval_s, self.budget_s
            ));
        }
        if !(self.ready_timeout_s >= 0.0 && self.ready_timeout_s.is_finite()) {
            errs.push(format!("ready timeout must be non-negative, got {}", self.ready_timeout_s));
        }
        let mut seen = HashSet::new();
        for &f in &self.failed {
            if f as usize >= m {
                errs.push(format!("failed trainer {f} out of range for {m} trainers"));
            } else if !seen.insert(f) {
                errs.push(format!("failed trainer {f} listed twice"));
            }
        }
        if m > 0 && seen.len() >= m {
            errs.push(format!("all {m} trainers are marked failed"));
        }
        for &(c, _) in &self.crashes {
            if c as usize >= m {
                errs.push(format!("crashing trainer {c} out of range for {m} trainers"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CoordError::Config(errs.join("; ")))
        }
    }

    pub fn server_config(&self) -> ServerConfig {
        ServerConfig {
            budget: from_secs(self.budget_s),
            interval: from_secs(self.interval_s),
            ready_timeout: from_secs(self.ready_timeout_s),
            eval_queue: self.eval_queue,
        }
    }

    fn crash_round(&self, i: TrainerId) -> Option<u64> {
        self.crashes.iter().find(|c| c.0 == i).map(|c| c.1)
    }
}

pub struct TrainerSetup<L> {
    pub learner: L,
    pub cost: StepCost,
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub run: RunOutcome,
    /// Per slot; `None` for trainers that never started or failed.
    pub trainers: Vec<Option<TrainerOutcome>>,
    /// Trainers that stopped with an error.
    pub trainer_errors: Vec<(TrainerId, String)>,
    pub trace: Vec<Event>,
}

/// Runs the protocol with in-process mailboxes on `clock`.
pub fn run_local<L: LocalLearner>(
    clock: &Clock,
    cfg: &SessionConfig,
    setups: Vec<TrainerSetup<L>>,
    init: ModelWeights,
    eval: Option<EvalFn>,
) -> Result<SessionOutcome, CoordError> {
    cfg.validate(setups.len())?;
    let (server_ep, trainer_ep) = transport::local(setups.len());
    let connect = trainer_ep
        .into_iter()
        .map(|ep| move || Ok::<_, CoordError>(ep))
        .collect();
    run_with(clock, cfg, server_ep, connect, setups, init, eval)
}

/// Runs the protocol over loopback TCP on the wall clock.
pub fn run_tcp<L: LocalLearner>(
    cfg: &SessionConfig,
    setups: Vec<TrainerSetup<L>>,
    init: ModelWeights,
    eval: Option<EvalFn>,
) -> Result<SessionOutcome, CoordError> {
    let m = setups.len();
    cfg.validate(m)?;
    let (server_ep, server) = transport::tcp_server("127.0.0.1:0", m)?;
    let addr = server.local_addr();
    let timeout = Duration::from_secs_f64(cfg.ready_timeout_s.max(1.0));
    let connect = (0..m)
        .map(|i| move || transport::tcp_trainer(addr, i as TrainerId, timeout))
        .collect();
    let out = run_with(&Clock::real(), cfg, server_ep, connect, setups, init, eval);
    drop(server);
    out
}

fn run_with<L, C>(
    clock: &Clock,
    cfg: &SessionConfig,
    server_ep: transport::ServerEndpoints,
    connect: Vec<C>,
    setups: Vec<TrainerSetup<L>>,
    init: ModelWeights,
    eval: Option<EvalFn>,
) -> Result<SessionOutcome, CoordError>
where
    L: LocalLearner,
    C: FnOnce() -> Result<TrainerEndpoints, CoordError> + Send,
{
    let m = setups.len();
    let trace = Trace::new(cfg.trace);
    // The server registers first so it wins ties on the virtual clock.
    let server_part = clock.participant();
    let mut jobs = Vec::new();
    for (i, (setup, connect)) in setups.into_iter().zip(connect).enumerate() {
        let id = i as TrainerId;
        if cfg.failed.contains(&id) {
            continue;
        }
        jobs.push((id, clock.participant(), setup, connect, cfg.crash_round(id)));
    }

    let mut trainers: Vec<Option<TrainerOutcome>> = vec![None; m];
    let mut trainer_errors = Vec::new();
    let run = thread::scope(|s| {
        let handles: Vec<_> = jobs
            .into_iter()
            .map(|(id, part, mut setup, connect, crash)| {
                let trace = &trace;
                let handle = s.spawn(move || {
                    let ep = connect()?;
                    part.start();
                    run_trainer(&part, &ep, &mut setup.learner, &mut setup.cost, crash, trace)
                });
                (id, handle)
            })
            .collect();
        server_part.start();
        let run = run_server(&server_part, &cfg.server_config(), &server_ep, init, eval, &trace);
        drop(server_part);
        for (id, handle) in handles {
            match handle.join() {
                Ok(Ok(o)) => trainers[id as usize] = Some(o),
                Ok(Err(e)) => trainer_errors.push((id, e.to_string())),
                Err(_) => trainer_errors.push((id, CoordError::TrainerPanicked(id).to_string())),
            }
        }
        run
    })?;
    Ok(SessionOutcome {
        run,
        trainers,
        trainer_errors,
        trace: trace.events(),
    })
}
