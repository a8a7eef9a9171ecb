//! Shallow out-of-core LOD octree.
//!
//! Construction runs in four steps: a counting pass over a coarse grid
//! ([`chunk_count_pass`]), a bottom-up merge of sparse cells into chunks
//! ([`merge_cells`]), a distribution pass writing each point to its chunk
//! file ([`chunk_distribute_pass`]), then parallel per-chunk indexing
//! ([`index_chunk`]) and a final [`stitch`] under a global root. Each node
//! stores its points exactly once: coarse nodes hold a first-per-cell grid
//! sample moved up from their children.

mod build;
mod chunking;
mod indexing;
mod io;
mod stitch;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use build::{build_octree, BuildPhase, BuildTimings};
pub use chunking::{
    cell_of, chunk_count_pass, chunk_distribute_pass, grid_level_for, merge_cells, ChunkInfo,
    ChunkTable,
};
pub use indexing::{index_chunk, index_points, sample_into_parent, sampling_cell, LocalOctree};
pub use io::{
    decode_hierarchy, encode_hierarchy, write_octree, Metadata, OctreeDir, DECIMATED_FILE,
    HIERARCHY_FILE, HIERARCHY_RECORD_SIZE, METADATA_FILE, POINTS_FILE,
};
pub use stitch::stitch;

use crate::cloud_io::{decode_records, PointRecord, Quantization, RECORD_SIZE};
use crate::error::{Error, Result};
use crate::geometry::Aabb;

/// Deepest level a node may reach; nodes there are never split.
pub const MAX_LEVEL: usize = 20;

#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub max_chunk_points: u64,
    pub max_node_points: u64,
    /// Cells per axis of the LOD sampling grid.
    pub sampling_grid_size: u32,
    pub worker_count: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            max_chunk_points: 4_000_000,
            max_node_points: 200_000,
            sampling_grid_size: 128,
            worker_count: crate::default_workers(),
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_node_points == 0 {
            return Err(Error::InvalidConfig("max_node_points must be >= 1".into()));
        }
        let g = self.sampling_grid_size;
        if g < 2 || !g.is_power_of_two() || g > 1024 {
            return Err(Error::InvalidConfig(format!(
                "sampling_grid_size must be a power of two in [2, 1024], got {g}"
            )));
        }
        if self.max_chunk_points < self.max_node_points {
            return Err(Error::InvalidConfig(
                "max_chunk_points must be >= max_node_points".into(),
            ));
        }
        if self.worker_count == 0 {
            return Err(Error::InvalidConfig("worker_count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Node name: `r` followed by one octant digit per level.
///
/// Ordered by length, then lexicographically, which is breadth-first order
/// with children visited in octant order.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeName(String);

impl NodeName {
    pub fn root() -> Self {
        NodeName("r".to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn level(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_root(&self) -> bool {
        self.0.len() == 1
    }

    pub fn child(&self, k: u8) -> NodeName {
        debug_assert!(k < 8);
        let mut s = String::with_capacity(self.0.len() + 1);
        s.push_str(&self.0);
        s.push((b'0' + k) as char);
        NodeName(s)
    }

    pub fn parent(&self) -> Option<NodeName> {
        (!self.is_root()).then(|| NodeName(self.0[..self.0.len() - 1].to_string()))
    }

    /// Octant of this node within its parent.
    pub fn octant(&self) -> Option<u8> {
        (!self.is_root()).then(|| self.0.as_bytes()[self.0.len() - 1] - b'0')
    }

    /// Octant digits from the root down.
    pub fn path(&self) -> impl Iterator<Item = u8> + '_ {
        self.0.bytes().skip(1).map(|b| b - b'0')
    }

    /// True if `self` is a proper ancestor of `other`.
    pub fn is_ancestor_of(&self, other: &NodeName) -> bool {
        other.0.len() > self.0.len() && other.0.starts_with(&self.0)
    }

    /// Proper ancestors, root first.
    pub fn ancestors(&self) -> impl Iterator<Item = NodeName> + '_ {
        (1..self.0.len()).map(|n| NodeName(self.0[..n].to_string()))
    }

    /// Bounds of this node given the root cube.
    pub fn bounds_in(&self, root: &Aabb) -> Aabb {
        self.path().fold(*root, |b, k| b.octant(k))
    }
}

impl Ord for NodeName {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for NodeName {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NodeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for NodeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl FromStr for NodeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let ok = s.starts_with('r') && s.bytes().skip(1).all(|b| (b'0'..=b'7').contains(&b));
        if ok && s.len() <= MAX_LEVEL + 1 {
            Ok(NodeName(s.to_string()))
        } else {
            Err(Error::InvalidConfig(format!("invalid node name {s:?}")))
        }
    }
}

impl TryFrom<String> for NodeName {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NodeName> for String {
    fn from(n: NodeName) -> String {
        n.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeEntry {
    pub name: NodeName,
    pub level: u32,
    /// Bit `k` set iff child `k` exists.
    pub child_mask: u8,
    pub num_points: u64,
    pub byte_offset: u64,
    pub byte_size: u64,
    pub bounds: Aabb,
}

impl NodeEntry {
    pub fn is_leaf(&self) -> bool {
        self.child_mask == 0
    }

    pub fn children(&self) -> impl Iterator<Item = NodeName> + '_ {
        (0..8u8)
            .filter(|k| self.child_mask & (1 << k) != 0)
            .map(|k| self.name.child(k))
    }
}

/// The tree skeleton: every node with its byte range into `points.bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct OctreeHierarchy {
    pub nodes: BTreeMap<NodeName, NodeEntry>,
    pub root_bounds: Aabb,
    /// Exact bounds of the source cloud.
    pub source_bounds: Aabb,
    pub total_points: u64,
    pub quantization: Quantization,
    pub max_node_points: u64,
    pub grid_size: u32,
}

impl OctreeHierarchy {
    /// A hierarchy with no nodes yet.
    pub fn skeleton(
        root_bounds: Aabb,
        source_bounds: Aabb,
        quantization: Quantization,
        max_node_points: u64,
        grid_size: u32,
    ) -> Self {
        Self {
            nodes: BTreeMap::new(),
            root_bounds,
            source_bounds,
            total_points: 0,
            quantization,
            max_node_points,
            grid_size,
        }
    }

    pub fn root(&self) -> &NodeEntry {
        &self.nodes[&NodeName::root()]
    }

    pub fn get(&self, name: &NodeName) -> Option<&NodeEntry> {
        self.nodes.get(name)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in breadth-first order.
    pub fn iter(&self) -> impl Iterator<Item = &NodeEntry> {
        self.nodes.values()
    }

    pub fn depth(&self) -> u32 {
        self.nodes.values().map(|n| n.level).max().unwrap_or(0)
    }

    /// Node count per level, index = level.
    pub fn level_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.depth() as usize + 1];
        for n in self.nodes.values() {
            h[n.level as usize] += 1;
        }
        h
    }

    pub fn total_bytes(&self) -> u64 {
        self.nodes.values().map(|n| n.byte_size).sum()
    }

    /// Sets byte ranges as breadth-first prefix sums of payload sizes.
    pub fn assign_offsets(&mut self) {
        let mut offset = 0;
        for n in self.nodes.values_mut() {
            n.byte_offset = offset;
            n.byte_size = n.num_points * RECORD_SIZE as u64;
            offset += n.byte_size;
        }
    }

    /// Checks the structural invariants: parent links, child masks, byte
    /// sizes and point conservation.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::MalformedOctree(m));
        if !self.nodes.contains_key(&NodeName::root()) {
            return bad("missing root".into());
        }
        let mut sum = 0;
        for (name, n) in &self.nodes {
            if &n.name != name || n.level as usize != name.level() {
                return bad(format!("entry mismatch at {name}"));
            }
            if n.byte_size != n.num_points * RECORD_SIZE as u64 {
                return bad(format!("byte size of {name}"));
            }
            if let Some(parent) = name.parent() {
                match self.nodes.get(&parent) {
                    Some(p) if p.child_mask & (1 << name.octant().unwrap()) != 0 => {}
                    _ => return bad(format!("{name} not linked from its parent")),
                }
            }
            for k in 0..8 {
                if n.child_mask & (1 << k) != 0 && !self.nodes.contains_key(&name.child(k)) {
                    return bad(format!("{name} lists missing child {k}"));
                }
            }
            sum += n.num_points;
        }
        if sum != self.total_points {
            return bad(format!("node points sum {sum} != total {}", self.total_points));
        }
        Ok(())
    }
}

/// Where a node's points live while the tree is being assembled.
#[derive(Debug, Clone)]
pub enum Payload {
    Memory(Vec<PointRecord>),
    /// `count` records at byte `offset` of a spill file.
    Spilled {
        file: std::sync::Arc<std::path::PathBuf>,
        offset: u64,
        count: u64,
    },
}

impl Payload {
    pub fn len(&self) -> u64 {
        match self {
            Payload::Memory(v) => v.len() as u64,
            Payload::Spilled { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load(&self) -> Result<Vec<PointRecord>> {
        match self {
            Payload::Memory(v) => Ok(v.clone()),
            Payload::Spilled {
                file,
                offset,
                count,
            } => {
                use std::os::unix::fs::FileExt;
                let mut buf = vec![0u8; *count as usize * RECORD_SIZE];
                std::fs::File::open(file.as_ref())?.read_exact_at(&mut buf, *offset)?;
                Ok(decode_records(&buf))
            }
        }
    }
}

/// Node payloads keyed by name.
pub type NodePayloads = BTreeMap<NodeName, Payload>;
