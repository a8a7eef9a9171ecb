use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::error::Result;
use crate::CancelToken;

/// Progress sink and cancellation flag handed to a long-running pass.
#[derive(Clone, Copy, Default)]
pub struct PassControl<'a> {
    pub cancel: Option<&'a CancelToken>,
    pub progress: Option<&'a (dyn Fn(f64) + Sync)>,
}

impl<'a> PassControl<'a> {
    pub fn new(cancel: &'a CancelToken, progress: &'a (dyn Fn(f64) + Sync)) -> Self {
        Self {
            cancel: Some(cancel),
            progress: Some(progress),
        }
    }

    pub fn check(&self) -> Result<()> {
        match self.cancel {
            Some(c) => c.check(),
            None => Ok(()),
        }
    }

    pub(crate) fn reporter(&self, total: u64) -> Reporter<'a> {
        Reporter::new(total, self.progress)
    }
}

/// Turns concurrent increments into a non-decreasing fraction stream.
pub(crate) struct Reporter<'a> {
    total: u64,
    done: AtomicU64,
    last: Mutex<f64>,
    callback: Option<&'a (dyn Fn(f64) + Sync)>,
}

impl<'a> Reporter<'a> {
    pub(crate) fn new(total: u64, callback: Option<&'a (dyn Fn(f64) + Sync)>) -> Self {
        Self {
            total,
            done: AtomicU64::new(0),
            last: Mutex::new(0.0),
            callback,
        }
    }

    pub(crate) fn advance(&self, n: u64) {
        let Some(cb) = self.callback else { return };
        let done = self.done.fetch_add(n, Ordering::Relaxed) + n;
        let frac = (done as f64 / self.total.max(1) as f64).min(1.0);
        let mut last = self.last.lock().unwrap();
        if frac > *last {
            *last = frac;
            cb(frac);
        }
    }

    pub(crate) fn finish(&self) {
        let Some(cb) = self.callback else { return };
        let mut last = self.last.lock().unwrap();
        if *last < 1.0 {
            *last = 1.0;
            cb(1.0);
        }
    }
}
