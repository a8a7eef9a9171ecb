use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use super::{plan_traversal, CacheEvent, CameraState, Dispatcher, Mailbox, NodeCache, NodeReader, TraversalConfig, TraversalPlan};
use crate::error::{Error, Result};
use crate::octree::OctreeHierarchy;

/// Background traverser: re-plans from the latest camera every tick, issues
/// loads on an IO pool, and publishes the newest plan.
///
/// Cache events (loads completed, unloads, failures) are queued on
/// [`events`](Self::events) for a consumer to drain at its own pace.
pub struct TraversalAgent {
    cameras: Arc<Mailbox<CameraState>>,
    plans: Arc<Mailbox<TraversalPlan>>,
    events: Arc<Dispatcher<CacheEvent>>,
    cache: Arc<NodeCache>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl TraversalAgent {
    pub fn spawn(
        h: Arc<OctreeHierarchy>,
        reader: Arc<dyn NodeReader>,
        cfg: TraversalConfig,
        io_threads: usize,
        tick: Duration,
    ) -> Result<Self> {
        cfg.validate()?;
        let cache = Arc::new(NodeCache::new(cfg.max_cached_bytes));
        let cameras = Arc::new(Mailbox::new());
        let plans = Arc::new(Mailbox::new());
        let events = Arc::new(Dispatcher::new());
        let stop = Arc::new(AtomicBool::new(false));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(io_threads.max(1))
            .thread_name(|i| format!("fastpoints-io-{i}"))
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;

        let worker = {
            let (cache, cameras, plans, events, stop) =
                (cache.clone(), cameras.clone(), plans.clone(), events.clone(), stop.clone());
            move || {
                let mut camera: Option<CameraState> = None;
                while !stop.load(Ordering::Relaxed) {
                    if let Some(c) = cameras.wait_take(tick) {
                        camera = Some(c);
                    }
                    let Some(cam) = camera else { continue };
                    let Ok(plan) = plan_traversal(&h, &cache, &cam, &cfg) else {
                        camera = None;
                        continue;
                    };
                    let (tickets, evs) = cache.begin_apply(&plan, &h);
                    for e in evs {
                        let _ = events.enqueue(e);
                    }
                    for t in tickets {
                        let (cache, reader, events) = (cache.clone(), reader.clone(), events.clone());
                        pool.spawn(move || {
                            let ev = cache.complete(&t, reader.read_node(&t.entry));
                            let _ = events.enqueue(ev);
                        });
                    }
                    plans.post(plan);
                }
            }
        };
        let handle = std::thread::Builder::new()
            .name("fastpoints-traverse".into())
            .spawn(worker)?;
        Ok(Self {
            cameras,
            plans,
            events,
            cache,
            stop,
            handle: Some(handle),
        })
    }

    pub fn set_camera(&self, cam: CameraState) {
        self.cameras.post(cam);
    }

    /// Newest plan not yet taken, if any.
    pub fn take_plan(&self) -> Option<TraversalPlan> {
        self.plans.take()
    }

    pub fn wait_plan(&self, timeout: Duration) -> Option<TraversalPlan> {
        self.plans.wait_take(timeout)
    }

    pub fn events(&self) -> &Arc<Dispatcher<CacheEvent>> {
        &self.events
    }

    pub fn cache(&self) -> &Arc<NodeCache> {
        &self.cache
    }

    pub fn shutdown(mut self) {
        self.stop_thread();
    }

    fn stop_thread(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        self.events.close();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for TraversalAgent {
    fn drop(&mut self) {
        self.stop_thread();
    }
}
