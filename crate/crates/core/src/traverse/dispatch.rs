use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use crate::error::{Error, Result};

/// Deferred unit of work run by the consumer.
pub type Action = Box<dyn FnOnce() + Send>;

/// Multi-producer, single-consumer FIFO drained a bounded number of items
/// per tick.
pub struct Dispatcher<A = Action> {
    state: Mutex<(VecDeque<A>, bool)>,
}

impl<A> Default for Dispatcher<A> {
    fn default() -> Self {
        Self {
            state: Mutex::new((VecDeque::new(), false)),
        }
    }
}

impl<A> Dispatcher<A> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enqueue(&self, a: A) -> Result<()> {
        let mut s = self.state.lock().unwrap();
        if s.1 {
            return Err(Error::QueueClosed);
        }
        s.0.push_back(a);
        Ok(())
    }

    /// Hands up to `max` queued items to `f` in FIFO order; returns how many.
    pub fn drain_with(&self, max: usize, mut f: impl FnMut(A)) -> usize {
        let batch: Vec<A> = {
            let mut s = self.state.lock().unwrap();
            let n = max.min(s.0.len());
            s.0.drain(..n).collect()
        };
        let n = batch.len();
        batch.into_iter().for_each(&mut f);
        n
    }

    /// Rejects further enqueues. Already queued items can still be drained.
    pub fn close(&self) {
        self.state.lock().unwrap().1 = true;
    }

    pub fn is_closed(&self) -> bool {
        self.state.lock().unwrap().1
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Dispatcher<Action> {
    /// Runs up to `max` queued actions; returns how many ran.
    pub fn drain(&self, max: usize) -> usize {
        self.drain_with(max, |a| a())
    }
}

/// Single-slot mailbox keeping only the newest value.
pub struct Mailbox<T> {
    slot: Mutex<Option<T>>,
    ready: Condvar,
}

impl<T> Default for Mailbox<T> {
    fn default() -> Self {
        Self {
            slot: Mutex::new(None),
            ready: Condvar::new(),
        }
    }
}

impl<T> Mailbox<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `v`, replacing any unconsumed value.
    pub fn post(&self, v: T) {
        *self.slot.lock().unwrap() = Some(v);
        self.ready.notify_all();
    }

    pub fn take(&self) -> Option<T> {
        self.slot.lock().unwrap().take()
    }

    pub fn wait_take(&self, timeout: Duration) -> Option<T> {
        let guard = self.slot.lock().unwrap();
        let (mut guard, _) = self
            .ready
            .wait_timeout_while(guard, timeout, |s| s.is_none())
            .unwrap();
        guard.take()
    }
}
