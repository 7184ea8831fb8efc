//! Wall clock and a deterministic virtual clock behind one interface.
//!
//! Under the virtual clock every participant thread must hold a token to
//! run. The token passes only when the holder blocks (sleeps, waits or
//! finishes), always to the participant with the earliest wake time, ties
//! broken by registration order. Virtual time jumps straight to the next
//! wake time, so a ten-minute budget costs only the real compute inside it
//! and every run with the same inputs interleaves identically.

use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

/// Clock readings and durations in nanoseconds.
pub type Nanos = u64;

pub const NANOS_PER_SEC: f64 = 1e9;

pub fn from_secs(s: f64) -> Nanos {
    assert!(s >= 0.0 && s.is_finite(), "duration must be finite and non-negative, got {s}");
    (s * NANOS_PER_SEC).round() as Nanos
}

pub fn to_secs(n: Nanos) -> f64 {
    n as f64 / NANOS_PER_SEC
}

/// Shared-state condition evaluated by whichever thread passes the token.
pub type Predicate = Arc<dyn Fn() -> bool + Send + Sync>;

#[derive(Clone)]
pub enum Clock {
    Real(Instant),
    Mock(Arc<MockScheduler>),
}

impl std::fmt::Debug for Clock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(if self.is_mock() { "Clock::Mock" } else { "Clock::Real" })
    }
}

impl Clock {
    pub fn real() -> Self {
        Clock::Real(Instant::now())
    }

    pub fn mock() -> Self {
        Clock::Mock(Arc::new(MockScheduler::default()))
    }

    pub fn is_mock(&self) -> bool {
        matches!(self, Clock::Mock(_))
    }

    /// Registers a participant. Under the virtual clock every participant
    /// must be registered before any of them starts waiting on another.
    pub fn participant(&self) -> Participant {
        match self {
            Clock::Real(epoch) => Participant::Real(*epoch),
            Clock::Mock(s) => Participant::Mock {
                id: s.register(),
                sched: Arc::clone(s),
            },
        }
    }
}

/// One thread's view of the clock.
pub enum Participant {
    Real(Instant),
    Mock { sched: Arc<MockScheduler>, id: usize },
}

impl Participant {
    /// Blocks until this participant may run. Called once at thread start.
    pub fn start(&self) {
        if let Participant::Mock { sched, id } = self {
            let mut st = sched.lock();
            if st.current.is_none() {
                sched.grant(&mut st);
            }
            sched.await_token(st, *id);
        }
    }

    pub fn is_mock(&self) -> bool {
        matches!(self, Participant::Mock { .. })
    }

    pub fn now(&self) -> Nanos {
        match self {
            Participant::Real(epoch) => epoch.elapsed().as_nanos() as Nanos,
            Participant::Mock { sched, .. } => sched.lock().now,
        }
    }

    pub fn sleep_until(&self, t: Nanos) {
        match self {
            Participant::Real(_) => {
                let now = self.now();
                if t > now {
                    thread::sleep(Duration::from_nanos(t - now));
                }
            }
            Participant::Mock { sched, id } => sched.block(*id, PState::Ready(t)),
        }
    }

    pub fn sleep(&self, d: Nanos) {
        self.sleep_until(self.now().saturating_add(d));
    }

    /// Blocks until `pred` holds or `deadline` passes. Returns the final
    /// value of `pred`.
    pub fn wait_for(&self, pred: Predicate, deadline: Option<Nanos>) -> bool {
        match self {
            Participant::Real(_) => loop {
                if pred() {
                    return true;
                }
                let now = self.now();
                let mut pause = 200_000;
                if let Some(d) = deadline {
                    if now >= d {
                        return false;
                    }
                    pause = pause.min(d - now);
                }
                thread::sleep(Duration::from_nanos(pause));
            },
            Participant::Mock { sched, id } => {
                if pred() {
                    return true;
                }
                sched.block(
                    *id,
                    PState::Waiting {
                        pred: Arc::clone(&pred),
                        deadline,
                    },
                );
                pred()
            }
        }
    }
}

impl Drop for Participant {
    fn drop(&mut self) {
        if let Participant::Mock { sched, id } = self {
            let mut st = sched.lock();
            st.parts[*id] = PState::Done;
            if st.current == Some(*id) {
                st.current = None;
                sched.grant(&mut st);
            }
        }
    }
}

enum PState {
    /// Runnable at the given time.
    Ready(Nanos),
    Waiting {
        pred: Predicate,
        deadline: Option<Nanos>,
    },
    Running,
    Done,
}

#[derive(Default)]
struct MockState {
    now: Nanos,
    current: Option<usize>,
    parts: Vec<PState>,
    deadlock: bool,
}

#[derive(Default)]
pub struct MockScheduler {
    state: Mutex<MockState>,
    cv: Condvar,
}

impl MockScheduler {
    fn lock(&self) -> MutexGuard<'_, MockState> {
        // A panicking participant must not wedge the rest of the run.
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn register(&self) -> usize {
        let mut st = self.lock();
        st.parts.push(PState::Ready(0));
        st.parts.len() - 1
    }

    /// Current virtual time, readable from outside any participant.
    pub fn now(&self) -> Nanos {
        self.lock().now
    }

    fn block(&self, id: usize, next: PState) {
        let mut st = self.lock();
        debug_assert_eq!(st.current, Some(id), "participant {id} blocked without the token");
        st.parts[id] = next;
        st.current = None;
        self.grant(&mut st);
        self.await_token(st, id);
    }

    fn await_token(&self, mut st: MutexGuard<'_, MockState>, id: usize) {
        while st.current != Some(id) {
            if st.deadlock {
                drop(st);
                panic!("virtual clock deadlock: every participant waits on a condition that cannot change");
            }
            st = self.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }

    /// Passes the token to the earliest runnable participant.
    fn grant(&self, st: &mut MockState) {
        let now = st.now;
        let mut best: Option<(Nanos, usize)> = None;
        let mut live = false;
        for (id, p) in st.parts.iter().enumerate() {
            let at = match p {
                PState::Ready(t) => Some((*t).max(now)),
                PState::Waiting { pred, deadline } => {
                    if pred() {
                        Some(now)
                    } else {
                        deadline.map(|d| d.max(now))
                    }
                }
                PState::Running | PState::Done => None,
            };
            live |= !matches!(p, PState::Done);
            if let Some(t) = at {
                if best.is_none_or(|b| (t, id) < b) {
                    best = Some((t, id));
                }
            }
        }
        match best {
            Some((t, id)) => {
                st.now = t;
                st.parts[id] = PState::Running;
                st.current = Some(id);
            }
            None if live => st.deadlock = true,
            None => {}
        }
        self.cv.notify_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

    #[test]
    fn seconds_round_trip() {
        assert_eq!(from_secs(1.5), 1_500_000_000);
        assert_eq!(to_secs(250_000_000), 0.25);
    }

    #[test]
    fn virtual_sleepers_interleave_by_time() {
        let clock = Clock::mock();
        let log = Arc::new(Mutex::new(Vec::new()));
        let handles: Vec<_> = [(3u64, 'a'), (2, 'b')]
            .into_iter()
            .map(|(period, tag)| {
                let p = clock.participant();
                let log = Arc::clone(&log);
                thread::spawn(move || {
                    p.start();
                    for _ in 0..3 {
                        p.sleep(period);
                        log.lock().unwrap().push((p.now(), tag));
                    }
                })
            })
            .collect();
        handles.into_iter().for_each(|h| h.join().unwrap());
        let log = log.lock().unwrap().clone();
        assert_eq!(
            log,
            vec![(2, 'b'), (3, 'a'), (4, 'b'), (6, 'a'), (6, 'b'), (9, 'a')]
        );
    }

    #[test]
    fn waits_see_state_changes_and_deadlines() {
        let clock = Clock::mock();
        let flag = Arc::new(AtomicBool::new(false));
        let seen_at = Arc::new(AtomicU64::new(0));
        let waiter = {
            let p = clock.participant();
            let flag = Arc::clone(&flag);
            let seen_at = Arc::clone(&seen_at);
            thread::spawn(move || {
                p.start();
                let f = Arc::clone(&flag);
                assert!(!p.wait_for(Arc::new(move || f.load(Ordering::SeqCst)), Some(5)));
                assert_eq!(p.now(), 5);
                let f = Arc::clone(&flag);
                assert!(p.wait_for(Arc::new(move || f.load(Ordering::SeqCst)), None));
                seen_at.store(p.now(), Ordering::SeqCst);
            })
        };
        let setter = {
            let p = clock.participant();
            let flag = Arc::clone(&flag);
            thread::spawn(move || {
                p.start();
                p.sleep_until(40);
                flag.store(true, Ordering::SeqCst);
                p.sleep(1);
            })
        };
        waiter.join().unwrap();
        setter.join().unwrap();
        assert_eq!(seen_at.load(Ordering::SeqCst), 40);
    }

    #[test]
    fn deadlock_is_reported() {
        let clock = Clock::mock();
        let p = clock.participant();
        let h = thread::spawn(move || {
            p.start();
            p.wait_for(Arc::new(|| false), None);
        });
        assert!(h.join().is_err());
    }

    #[test]
    fn real_clock_waits() {
        let p = Clock::real().participant();
        p.start();
        let t0 = p.now();
        assert!(!p.wait_for(Arc::new(|| false), Some(t0 + 2_000_000)));
        assert!(p.now() >= t0 + 2_000_000);
        assert!(p.wait_for(Arc::new(|| true), None));
    }
}
