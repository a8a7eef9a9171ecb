//! HTTP service exposing build status, the preview cloud and the octree.
//!
//! Build progress is published by replacing an immutable [`BuildStatus`]
//! snapshot, so status readers never wait on build workers.

mod http;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use http::{serve, ServeConfig, Service};

use crate::cloud_io::CloudSource;
use crate::commands::{convert, ConvertObserver, ConvertOptions, ConvertReport};
use crate::decimate::DecimatedCloud;
use crate::error::{Error, Result};
use crate::octree::OctreeDir;
use crate::CancelToken;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    Decimating,
    Chunking,
    Indexing,
    Stitching,
    Done,
    Failed,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Idle => "Idle",
            Phase::Decimating => "Decimating",
            Phase::Chunking => "Chunking",
            Phase::Indexing => "Indexing",
            Phase::Stitching => "Stitching",
            Phase::Done => "Done",
            Phase::Failed => "Failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BuildStatus {
    pub phase: Phase,
    pub progress: f64,
    pub decimated_ready: bool,
    pub message: Option<String>,
    /// Unix time in milliseconds.
    pub started_at: u64,
    pub updated_at: u64,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Everything the HTTP handlers read: the status snapshot, the preview
/// bytes once decimation finishes and the opened octree once it is built.
pub struct LiveState {
    status: RwLock<Arc<BuildStatus>>,
    decimated: RwLock<Option<Arc<Vec<u8>>>>,
    octree: RwLock<Option<Arc<OctreeDir>>>,
    building: AtomicBool,
}

impl Default for LiveState {
    fn default() -> Self {
        let t = now_ms();
        Self {
            status: RwLock::new(Arc::new(BuildStatus {
                phase: Phase::Idle,
                progress: 0.0,
                decimated_ready: false,
                message: None,
                started_at: t,
                updated_at: t,
            })),
            decimated: RwLock::new(None),
            octree: RwLock::new(None),
            building: AtomicBool::new(false),
        }
    }
}

impl LiveState {
    pub fn new() -> Self {
        Self::default()
    }

    /// State for an already built directory.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let s = Self::new();
        s.publish_octree(OctreeDir::open(dir)?);
        s.update(|st| st.decimated_ready = true);
        Ok(s)
    }

    pub fn status(&self) -> Arc<BuildStatus> {
        self.status.read().unwrap().clone()
    }

    fn update(&self, f: impl FnOnce(&mut BuildStatus)) {
        let mut guard = self.status.write().unwrap();
        let mut next = (**guard).clone();
        f(&mut next);
        next.updated_at = now_ms();
        *guard = Arc::new(next);
    }

    /// Moves to `phase` at `progress`. Earlier phases and lower progress
    /// within the current phase are ignored.
    pub fn set_phase(&self, phase: Phase, progress: f64) {
        let cur = self.status();
        if phase < cur.phase || (phase == cur.phase && progress <= cur.progress) || cur.phase == Phase::Failed {
            return;
        }
        self.update(|s| {
            if phase > s.phase || (phase == s.phase && progress > s.progress) {
                s.phase = phase;
                s.progress = progress.clamp(0.0, 1.0);
            }
        });
    }

    pub fn fail(&self, message: String) {
        self.update(|s| {
            s.phase = Phase::Failed;
            s.message = Some(message);
        });
    }

    pub fn publish_decimated(&self, bytes: Vec<u8>) {
        *self.decimated.write().unwrap() = Some(Arc::new(bytes));
        self.update(|s| s.decimated_ready = true);
    }

    pub fn publish_octree(&self, dir: OctreeDir) {
        *self.octree.write().unwrap() = Some(Arc::new(dir));
        self.update(|s| {
            s.phase = Phase::Done;
            s.progress = 1.0;
        });
    }

    pub fn octree(&self) -> Option<Arc<OctreeDir>> {
        self.octree.read().unwrap().clone()
    }

    pub fn decimated(&self) -> Option<Arc<Vec<u8>>> {
        self.decimated.read().unwrap().clone()
    }

    pub fn is_building(&self) -> bool {
        self.building.load(Ordering::SeqCst)
    }

    fn begin_build(&self) -> Result<()> {
        if self.building.swap(true, Ordering::SeqCst) {
            return Err(Error::BuildInProgress);
        }
        self.update(|s| {
            s.phase = Phase::Idle;
            s.progress = 0.0;
            s.decimated_ready = false;
            s.message = None;
            s.started_at = now_ms();
        });
        *self.decimated.write().unwrap() = None;
        *self.octree.write().unwrap() = None;
        Ok(())
    }
}

impl ConvertObserver for LiveState {
    fn phase(&self, phase: Phase, fraction: f64) {
        self.set_phase(phase, fraction);
    }

    fn decimated(&self, cloud: &DecimatedCloud) {
        self.publish_decimated(cloud.to_bytes());
    }
}

/// A convert running on a background thread and reporting into a
/// [`LiveState`].
pub struct LiveBuild {
    pub out_dir: PathBuf,
    cancel: CancelToken,
    handle: Option<JoinHandle<Result<ConvertReport>>>,
}

impl LiveBuild {
    /// Starts converting `src`. Fails with [`Error::BuildInProgress`] if
    /// `state` already has a build running.
    pub fn spawn(state: Arc<LiveState>, src: CloudSource, opts: ConvertOptions, cancel: CancelToken) -> Result<Self> {
        state.begin_build()?;
        let out_dir = opts.out_dir.clone();
        let c = cancel.clone();
        let spawned = std::thread::Builder::new()
            .name("fastpoints-build".into())
            .spawn(move || {
                let r = convert(&src, &opts, state.as_ref(), &c)
                    .and_then(|rep| OctreeDir::open(&opts.out_dir).map(|d| (rep, d)));
                let out = match r {
                    Ok((rep, dir)) => {
                        state.publish_octree(dir);
                        Ok(rep)
                    }
                    Err(e) => {
                        state.fail(e.to_string());
                        Err(e)
                    }
                };
                state.building.store(false, Ordering::SeqCst);
                out
            });
        match spawned {
            Ok(handle) => Ok(Self {
                out_dir,
                cancel,
                handle: Some(handle),
            }),
            Err(e) => Err(e.into()),
        }
    }

    pub fn cancel(&self) {
        self.cancel.cancel();
    }

    pub fn is_finished(&self) -> bool {
        self.handle.as_ref().is_none_or(|h| h.is_finished())
    }

    pub fn join(mut self) -> Result<ConvertReport> {
        self.handle
            .take()
            .expect("joined once")
            .join()
            .unwrap_or_else(|_| Err(Error::InvalidConfig("build thread panicked".into())))
    }
}
