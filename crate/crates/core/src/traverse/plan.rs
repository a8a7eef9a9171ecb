use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use super::{aabb_visible, extract_frustum, node_priority, CameraState, Frustum, NodeCache};
use crate::error::{Error, Result};
use crate::octree::{NodeName, OctreeHierarchy};

#[derive(Debug, Clone, PartialEq)]
pub struct TraversalConfig {
    pub point_budget: u64,
    pub min_projected_pixels: f64,
    pub max_actions_per_tick: usize,
    pub max_cached_bytes: u64,
}

impl Default for TraversalConfig {
    fn default() -> Self {
        Self {
            point_budget: 2_000_000,
            min_projected_pixels: 2.0,
            max_actions_per_tick: 16,
            max_cached_bytes: 1 << 30,
        }
    }
}

impl TraversalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_actions_per_tick == 0 {
            return Err(Error::InvalidConfig("max_actions_per_tick must be >= 1".into()));
        }
        if self.min_projected_pixels.is_nan() {
            return Err(Error::InvalidConfig("min_projected_pixels is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraversalPlan {
    /// Selected and loaded, by descending priority.
    pub render_set: Vec<NodeName>,
    /// Selected but not loaded, by descending priority.
    pub load_list: Vec<NodeName>,
    /// Resident but no longer selected.
    pub unload_list: Vec<NodeName>,
    pub tick_id: u64,
}

impl TraversalPlan {
    /// Selected nodes (render set then load list).
    pub fn selected(&self) -> impl Iterator<Item = &NodeName> {
        self.render_set.iter().chain(&self.load_list)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selected {
    pub name: NodeName,
    pub priority: f64,
}

struct Candidate {
    priority: f64,
    name: NodeName,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // max-heap: higher priority first, then smaller name
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.name.cmp(&self.name))
    }
}

fn admit(h: &OctreeHierarchy, name: &NodeName, cam: &CameraState, f: &Frustum, min_px: f64) -> Option<Candidate> {
    let e = h.get(name)?;
    if !aabb_visible(&e.bounds, f) {
        return None;
    }
    let priority = node_priority(&e.bounds, cam);
    (priority >= min_px).then(|| Candidate {
        priority,
        name: name.clone(),
    })
}

/// Best-first selection from the root by descending priority. Invisible or
/// too-small nodes are skipped with their subtrees; the first node that
/// would overflow the budget ends the walk.
pub fn select_nodes(h: &OctreeHierarchy, cam: &CameraState, cfg: &TraversalConfig) -> Result<Vec<Selected>> {
    let f = extract_frustum(cam)?;
    let mut heap = BinaryHeap::new();
    heap.extend(admit(h, &NodeName::root(), cam, &f, cfg.min_projected_pixels));
    let mut total = 0u64;
    let mut out = Vec::new();
    while let Some(c) = heap.pop() {
        let e = &h.nodes[&c.name];
        if total + e.num_points > cfg.point_budget {
            break;
        }
        total += e.num_points;
        for child in e.children() {
            heap.extend(admit(h, &child, cam, &f, cfg.min_projected_pixels));
        }
        out.push(Selected {
            name: c.name,
            priority: c.priority,
        });
    }
    Ok(out)
}

/// Plans one tick: splits the selection by residency in `cache` and lists
/// resident nodes that fell out of it.
pub fn plan_traversal(
    h: &OctreeHierarchy,
    cache: &NodeCache,
    cam: &CameraState,
    cfg: &TraversalConfig,
) -> Result<TraversalPlan> {
    let selected = select_nodes(h, cam, cfg)?;
    let chosen: HashSet<&NodeName> = selected.iter().map(|s| &s.name).collect();
    let mut plan = TraversalPlan {
        render_set: Vec::new(),
        load_list: Vec::new(),
        unload_list: cache.resident().into_iter().filter(|n| !chosen.contains(n)).collect(),
        tick_id: cache.next_tick(),
    };
    for s in selected {
        if cache.is_loaded(&s.name) {
            plan.render_set.push(s.name);
        } else {
            plan.load_list.push(s.name);
        }
    }
    Ok(plan)
}
