//! Background validation of global weights.

use std::sync::mpsc::{sync_channel, SyncSender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crate::graph::SplitTag;
use crate::nn::ModelWeights;

/// Scores weights on a split; returns the MRR.
pub type EvalFn = Arc<dyn Fn(&ModelWeights, SplitTag) -> Result<f64, String> + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub round: u64,
    /// Seconds since training started.
    pub time_s: f64,
    pub mrr: f64,
}

pub(crate) struct EvalSummary {
    pub records: Vec<EvalRecord>,
    /// Round, weights and validation MRR of the best round; earliest wins
    /// ties.
    pub best: Option<(u64, Arc<ModelWeights>, f64)>,
    pub error: Option<String>,
}

/// One worker fed through a bounded queue; a full queue blocks the sender.
pub(crate) struct Evaluator {
    tx: SyncSender<(u64, f64, Arc<ModelWeights>)>,
    handle: JoinHandle<EvalSummary>,
}

impl Evaluator {
    pub fn spawn(eval: EvalFn, capacity: usize) -> Self {
        let (tx, rx) = sync_channel::<(u64, f64, Arc<ModelWeights>)>(capacity.max(1));
        let handle = thread::spawn(move || {
            let mut s = EvalSummary {
                records: Vec::new(),
                best: None,
                error: None,
            };
            for (round, time_s, w) in rx {
                if s.error.is_some() {
                    continue;
                }
                match eval(&w, SplitTag::Val) {
                    Ok(mrr) => {
                        if s.best.as_ref().is_none_or(|b| mrr > b.2) {
                            s.best = Some((round, Arc::clone(&w), mrr));
                        }
                        s.records.push(EvalRecord { round, time_s, mrr });
                    }
                    Err(e) => s.error = Some(format!("evaluation of round {round} failed: {e}")),
                }
            }
            s
        });
        Self { tx, handle }
    }

    pub fn submit(&self, round: u64, time_s: f64, w: Arc<ModelWeights>) {
        // The worker only exits once the sender is dropped.
        let _ = self.tx.send((round, time_s, w));
    }

    pub fn finish(self) -> EvalSummary {
        drop(self.tx);
        self.handle.join().unwrap_or_else(|_| EvalSummary {
            records: Vec::new(),
            best: None,
            error: Some("evaluator panicked".into()),
        })
    }
}
