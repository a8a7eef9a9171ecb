//! Out-of-core point cloud level-of-detail engine.
//!
//! The pipeline ingests an unordered PLY or LAS cloud ([`cloud_io`]),
//! produces an exactly-sized uniform preview ([`decimate`]), builds a shallow
//! LOD octree on background workers ([`octree`]), plans camera-driven
//! traversals under a point budget ([`traverse`]) and rasterizes the selected
//! nodes with 64-bit depth+color packing ([`raster`]). [`service`] exposes the
//! build and its output over HTTP.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod cloud_io;
pub mod commands;
pub mod decimate;
pub mod error;
pub mod geometry;
pub mod octree;
pub mod progress;
pub mod raster;
pub mod service;
pub mod synthetic;
pub mod traverse;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

pub use error::{Error, Result};
pub use progress::PassControl;

/// Environment variable overriding the default worker count.
pub const THREADS_ENV: &str = "FASTPOINTS_THREADS";

/// Worker count: `FASTPOINTS_THREADS` if set to a positive integer, else the
/// available hardware parallelism.
pub fn default_workers() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Cooperative cancellation flag shared between a caller and its workers.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::Relaxed)
    }

    pub fn check(&self) -> Result<()> {
        if self.is_cancelled() {
            Err(Error::Cancelled)
        } else {
            Ok(())
        }
    }
}
