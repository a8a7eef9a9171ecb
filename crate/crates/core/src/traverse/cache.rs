use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use super::TraversalPlan;
use crate::cloud_io::PointRecord;
use crate::error::Result;
use crate::octree::{NodeEntry, NodeName, OctreeDir, OctreeHierarchy};

/// Source of node payloads.
pub trait NodeReader: Send + Sync {
    fn read_node(&self, entry: &NodeEntry) -> Result<Vec<PointRecord>>;
}

impl NodeReader for OctreeDir {
    fn read_node(&self, entry: &NodeEntry) -> Result<Vec<PointRecord>> {
        OctreeDir::read_node(self, &entry.name)
    }
}

#[derive(Debug)]
pub struct NodePayload {
    pub name: NodeName,
    pub points: Vec<PointRecord>,
    pub bytes: u64,
}

#[derive(Debug, Clone)]
pub enum Residency {
    Unloaded,
    /// Load in flight; the generation identifies the request.
    Loading(u64),
    Loaded(Arc<NodePayload>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidencyKind {
    Unloaded,
    Loading,
    Loaded,
}

impl Residency {
    pub fn kind(&self) -> ResidencyKind {
        match self {
            Residency::Unloaded => ResidencyKind::Unloaded,
            Residency::Loading(_) => ResidencyKind::Loading,
            Residency::Loaded(_) => ResidencyKind::Loaded,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CacheEvent {
    LoadIssued(NodeName),
    Loaded(NodeName),
    Unloaded(NodeName),
    /// Completed after the node was unloaded or reissued; payload dropped.
    LoadDiscarded(NodeName),
    LoadFailed(NodeName, String),
    /// Not issued because it would exceed the byte cap.
    Deferred(NodeName),
}

/// An issued load. Pass it back to [`NodeCache::complete`].
#[derive(Debug, Clone)]
pub struct LoadTicket {
    pub entry: NodeEntry,
    pub generation: u64,
}

#[derive(Debug, Default)]
struct Inner {
    states: HashMap<NodeName, Residency>,
    sizes: HashMap<NodeName, u64>,
    resident_bytes: u64,
    reserved_bytes: u64,
    next_generation: u64,
}

/// Residency of node payloads. Resident plus in-flight bytes never exceed
/// `max_cached_bytes`.
#[derive(Debug)]
pub struct NodeCache {
    inner: Mutex<Inner>,
    max_cached_bytes: u64,
    tick: AtomicU64,
}

impl NodeCache {
    pub fn new(max_cached_bytes: u64) -> Self {
        Self {
            inner: Mutex::new(Inner::default()),
            max_cached_bytes,
            tick: AtomicU64::new(0),
        }
    }

    pub fn max_cached_bytes(&self) -> u64 {
        self.max_cached_bytes
    }

    pub(crate) fn next_tick(&self) -> u64 {
        self.tick.fetch_add(1, Ordering::Relaxed) + 1
    }

    pub fn state(&self, name: &NodeName) -> Residency {
        let inner = self.inner.lock().unwrap();
        inner.states.get(name).cloned().unwrap_or(Residency::Unloaded)
    }

    pub fn is_loaded(&self, name: &NodeName) -> bool {
        matches!(self.state(name), Residency::Loaded(_))
    }

    pub fn payload(&self, name: &NodeName) -> Option<Arc<NodePayload>> {
        match self.state(name) {
            Residency::Loaded(p) => Some(p),
            _ => None,
        }
    }

    /// Names of loaded and loading nodes, sorted.
    pub fn resident(&self) -> Vec<NodeName> {
        let inner = self.inner.lock().unwrap();
        let mut v: Vec<_> = inner
            .states
            .iter()
            .filter(|(_, s)| !matches!(s, Residency::Unloaded))
            .map(|(n, _)| n.clone())
            .collect();
        v.sort();
        v
    }

    pub fn loaded(&self) -> Vec<NodeName> {
        let inner = self.inner.lock().unwrap();
        let mut v: Vec<_> = inner
            .states
            .iter()
            .filter(|(_, s)| matches!(s, Residency::Loaded(_)))
            .map(|(n, _)| n.clone())
            .collect();
        v.sort();
        v
    }

    /// Bytes of loaded payloads.
    pub fn resident_bytes(&self) -> u64 {
        self.inner.lock().unwrap().resident_bytes
    }

    /// Bytes of loaded payloads plus in-flight loads.
    pub fn committed_bytes(&self) -> u64 {
        let i = self.inner.lock().unwrap();
        i.resident_bytes + i.reserved_bytes
    }

    /// Applies the plan's unloads, then issues its loads in order while they
    /// fit under the byte cap. Loads that do not fit are deferred.
    pub fn begin_apply(&self, plan: &TraversalPlan, h: &OctreeHierarchy) -> (Vec<LoadTicket>, Vec<CacheEvent>) {
        let mut inner = self.inner.lock().unwrap();
        let mut events = Vec::new();
        for name in &plan.unload_list {
            if unload(&mut inner, name) {
                events.push(CacheEvent::Unloaded(name.clone()));
            }
        }
        let mut tickets = Vec::new();
        for name in &plan.load_list {
            let Some(entry) = h.get(name) else { continue };
            if !matches!(inner.states.get(name), None | Some(Residency::Unloaded)) {
                continue;
            }
            if inner.resident_bytes + inner.reserved_bytes + entry.byte_size > self.max_cached_bytes {
                events.push(CacheEvent::Deferred(name.clone()));
                continue;
            }
            inner.next_generation += 1;
            let generation = inner.next_generation;
            inner.reserved_bytes += entry.byte_size;
            inner.sizes.insert(name.clone(), entry.byte_size);
            inner.states.insert(name.clone(), Residency::Loading(generation));
            events.push(CacheEvent::LoadIssued(name.clone()));
            tickets.push(LoadTicket {
                entry: entry.clone(),
                generation,
            });
        }
        (tickets, events)
    }

    /// Records the outcome of an issued load. A result for a node that was
    /// unloaded or reissued since is discarded.
    pub fn complete(&self, ticket: &LoadTicket, result: Result<Vec<PointRecord>>) -> CacheEvent {
        let mut inner = self.inner.lock().unwrap();
        let name = &ticket.entry.name;
        let current = matches!(inner.states.get(name), Some(Residency::Loading(g)) if *g == ticket.generation);
        if !current {
            return CacheEvent::LoadDiscarded(name.clone());
        }
        let size = inner.sizes[name];
        inner.reserved_bytes -= size;
        match result {
            Ok(points) => {
                inner.resident_bytes += size;
                let payload = Arc::new(NodePayload {
                    name: name.clone(),
                    points,
                    bytes: size,
                });
                inner.states.insert(name.clone(), Residency::Loaded(payload));
                CacheEvent::Loaded(name.clone())
            }
            Err(e) => {
                inner.states.remove(name);
                inner.sizes.remove(name);
                CacheEvent::LoadFailed(name.clone(), e.to_string())
            }
        }
    }

    /// [`begin_apply`](Self::begin_apply) followed by completing every load
    /// synchronously through `reader`.
    pub fn apply_sync(&self, plan: &TraversalPlan, h: &OctreeHierarchy, reader: &dyn NodeReader) -> Vec<CacheEvent> {
        let (tickets, mut events) = self.begin_apply(plan, h);
        for t in &tickets {
            events.push(self.complete(t, reader.read_node(&t.entry)));
        }
        events
    }

    pub fn unload(&self, name: &NodeName) -> bool {
        unload(&mut self.inner.lock().unwrap(), name)
    }
}

fn unload(inner: &mut Inner, name: &NodeName) -> bool {
    match inner.states.remove(name) {
        Some(Residency::Loaded(_)) => {
            inner.resident_bytes -= inner.sizes.remove(name).unwrap_or(0);
            true
        }
        Some(Residency::Loading(_)) => {
            inner.reserved_bytes -= inner.sizes.remove(name).unwrap_or(0);
            true
        }
        _ => false,
    }
}
