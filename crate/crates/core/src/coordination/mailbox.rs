//! Ordered single-consumer queues with a closed flag.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use super::clock::Predicate;

#[derive(Debug)]
pub struct Mailbox<T> {
    queue: Mutex<VecDeque<T>>,
    closed: AtomicBool,
}

impl<T> Default for Mailbox<T> {
    fn default() -> Self {
        Self {
            queue: Mutex::new(VecDeque::new()),
            closed: AtomicBool::new(false),
        }
    }
}

impl<T: Send + 'static> Mailbox<T> {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    fn queue(&self) -> MutexGuard<'_, VecDeque<T>> {
        self.queue.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Messages pushed after closing are dropped.
    pub fn push(&self, msg: T) {
        if !self.is_closed() {
            self.queue().push_back(msg);
        }
    }

    pub fn pop(&self) -> Option<T> {
        self.queue().pop_front()
    }

    pub fn len(&self) -> usize {
        self.queue().len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue().is_empty()
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }

    /// True once a message is queued or the sender is gone.
    pub fn readable(self: &Arc<Self>) -> Predicate {
        let me = Arc::clone(self);
        Arc::new(move || !me.is_empty() || me.is_closed())
    }
}
