//! The shared flags: per-trainer readiness, the aggregation flag and stop.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::partition::TrainerId;

#[derive(Debug)]
pub struct KvStore {
    ready: Vec<AtomicBool>,
    agg: AtomicBool,
    stop: AtomicBool,
}

impl KvStore {
    pub fn new(trainers: usize) -> Self {
        Self {
            ready: (0..trainers).map(|_| AtomicBool::new(false)).collect(),
            agg: AtomicBool::new(false),
            stop: AtomicBool::new(false),
        }
    }

    pub fn trainers(&self) -> usize {
        self.ready.len()
    }

    pub fn is_ready(&self, i: TrainerId) -> bool {
        self.ready
            .get(i as usize)
            .is_some_and(|r| r.load(Ordering::SeqCst))
    }

    pub fn set_agg(&self, v: bool) {
        self.agg.store(v, Ordering::SeqCst);
    }

    /// Stop is never cleared.
    pub fn set_stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}

/// Trainer-side access to the flags, local or remote.
pub trait KvClient: Send + Sync {
    fn set_ready(&self, i: TrainerId);
    fn agg(&self) -> bool;
    fn stop(&self) -> bool;
}

impl KvClient for KvStore {
    fn set_ready(&self, i: TrainerId) {
        if let Some(r) = self.ready.get(i as usize) {
            r.store(true, Ordering::SeqCst);
        }
    }

    fn agg(&self) -> bool {
        self.agg.load(Ordering::SeqCst)
    }

    fn stop(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }
}
