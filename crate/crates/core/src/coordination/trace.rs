//! Ordered protocol event log used to check safety properties.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::partition::TrainerId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    /// A trainer is about to start a local step.
    Step { trainer: TrainerId },
    /// The server accepted weights for `round`.
    Submit { trainer: TrainerId, round: u64 },
    /// The server set the stop flag.
    Stop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
}

/// Events carry a global sequence number. A trainer reserves the number for
/// a step before it reads the stop flag and the server reserves the number
/// for stop after setting the flag, so a step numbered after stop means the
/// trainer read the flag after it was set and still went ahead.
#[derive(Debug, Default)]
pub struct Trace {
    enabled: bool,
    seq: AtomicU64,
    events: Mutex<Vec<Event>>,
}

impl Trace {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            ..Self::default()
        }
    }

    /// Takes the next sequence number without logging anything yet.
    pub fn reserve(&self) -> u64 {
        self.seq.fetch_add(1, Ordering::SeqCst)
    }

    pub fn record_at(&self, seq: u64, kind: EventKind) {
        if self.enabled {
            let mut ev = self.events.lock().unwrap_or_else(|e| e.into_inner());
            ev.push(Event { seq, kind });
        }
    }

    pub fn record(&self, kind: EventKind) {
        let seq = self.reserve();
        self.record_at(seq, kind);
    }

    /// Events in sequence order.
    pub fn events(&self) -> Vec<Event> {
        let mut ev = self.events.lock().unwrap_or_else(|e| e.into_inner()).clone();
        ev.sort_by_key(|e| e.seq);
        ev
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceCheck {
    pub steps: usize,
    pub submissions: usize,
    pub duplicate_submissions: usize,
    pub steps_after_stop: usize,
}

pub fn check_trace(events: &[Event]) -> TraceCheck {
    let mut out = TraceCheck::default();
    let stop = events
        .iter()
        .find(|e| e.kind == EventKind::Stop)
        .map(|e| e.seq);
    let mut seen = HashSet::new();
    for e in events {
        match e.kind {
            EventKind::Step { .. } => {
                out.steps += 1;
                if stop.is_some_and(|s| e.seq > s) {
                    out.steps_after_stop += 1;
                }
            }
            EventKind::Submit { trainer, round } => {
                out.submissions += 1;
                if !seen.insert((trainer, round)) {
                    out.duplicate_submissions += 1;
                }
            }
            EventKind::Stop => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_violations() {
        let t = Trace::new(true);
        t.record(EventKind::Step { trainer: 0 });
        t.record(EventKind::Submit { trainer: 0, round: 0 });
        t.record(EventKind::Submit { trainer: 0, round: 0 });
        t.record(EventKind::Stop);
        t.record(EventKind::Step { trainer: 1 });
        let c = check_trace(&t.events());
        assert_eq!(c.duplicate_submissions, 1);
        assert_eq!(c.steps_after_stop, 1);
        assert_eq!(c.steps, 2);
        let off = Trace::new(false);
        off.record(EventKind::Stop);
        assert!(off.events().is_empty());
    }
}
