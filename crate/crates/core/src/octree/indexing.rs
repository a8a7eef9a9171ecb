//! Per-chunk local octrees with bottom-up first-per-cell sampling.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use super::{BuildConfig, ChunkInfo, NodeName, NodePayloads, Payload, MAX_LEVEL};
use crate::cloud_io::{decode_records, PointRecord, Quantization, RECORD_SIZE};
use crate::error::Result;
use crate::geometry::{child_index, Aabb};

/// A subtree rooted at a chunk node.
#[derive(Debug, Clone)]
pub struct LocalOctree {
    pub root: NodeName,
    /// Child mask of every node in the subtree.
    pub child_masks: BTreeMap<NodeName, u8>,
    pub payloads: NodePayloads,
}

impl LocalOctree {
    pub fn point_count(&self) -> u64 {
        self.payloads.values().map(Payload::len).sum()
    }
}

/// Flat index of the sampling cell holding `p` on a `grid`³ lattice over
/// `bounds`. Points on the high faces fall in the last cell.
pub fn sampling_cell(p: [f64; 3], bounds: &Aabb, grid: u32) -> u64 {
    let mut idx = 0u64;
    for i in 0..3 {
        let side = bounds.max[i] - bounds.min[i];
        let t = if side > 0.0 {
            (p[i] - bounds.min[i]) / side * grid as f64
        } else {
            0.0
        };
        let c = (t.max(0.0) as u64).min(grid as u64 - 1);
        idx = idx * grid as u64 + c;
    }
    idx
}

enum Occupancy {
    Bits(Vec<u64>),
    Set(HashSet<u64>),
}

impl Occupancy {
    fn new(grid: u32) -> Self {
        let cells = (grid as u64).pow(3);
        if cells <= 1 << 24 {
            Occupancy::Bits(vec![0; cells.div_ceil(64) as usize])
        } else {
            Occupancy::Set(HashSet::new())
        }
    }

    /// Marks `cell`; returns false if it was already taken.
    fn claim(&mut self, cell: u64) -> bool {
        match self {
            Occupancy::Bits(b) => {
                let (w, bit) = ((cell / 64) as usize, 1u64 << (cell % 64));
                let free = b[w] & bit == 0;
                b[w] |= bit;
                free
            }
            Occupancy::Set(s) => s.insert(cell),
        }
    }
}

/// Moves the first point arriving in each sampling cell of `bounds` out of
/// `children` (visited in the given order, each in payload order) and
/// returns them as the parent payload.
pub fn sample_into_parent(
    bounds: &Aabb,
    grid: u32,
    q: &Quantization,
    children: &mut [&mut Vec<PointRecord>],
) -> Vec<PointRecord> {
    let mut occ = Occupancy::new(grid);
    let mut parent = Vec::new();
    for child in children.iter_mut() {
        child.retain(|r| {
            let cell = sampling_cell(q.dequantize_record(r), bounds, grid);
            if occ.claim(cell) {
                parent.push(*r);
                false
            } else {
                true
            }
        });
    }
    parent
}

/// Builds a local octree over `points`, rooted at `name` with `bounds`.
///
/// Nodes are split by octant until they hold at most `max_node_points`,
/// reach [`MAX_LEVEL`] or shrink below one quantization step; internal
/// nodes are then filled bottom-up by [`sample_into_parent`].
pub fn index_points(
    points: Vec<PointRecord>,
    name: &NodeName,
    bounds: &Aabb,
    q: &Quantization,
    cfg: &BuildConfig,
) -> LocalOctree {
    let mut tree = LocalOctree {
        root: name.clone(),
        child_masks: BTreeMap::new(),
        payloads: BTreeMap::new(),
    };
    let mem = build_node(points, name.clone(), *bounds, q, cfg, &mut tree.child_masks);
    for (n, pts) in mem {
        tree.payloads.insert(n, Payload::Memory(pts));
    }
    tree
}

fn build_node(
    points: Vec<PointRecord>,
    name: NodeName,
    bounds: Aabb,
    q: &Quantization,
    cfg: &BuildConfig,
    masks: &mut BTreeMap<NodeName, u8>,
) -> Vec<(NodeName, Vec<PointRecord>)> {
    let side = bounds.extent().max_element();
    let leaf = points.len() as u64 <= cfg.max_node_points
        || name.level() >= MAX_LEVEL
        || side < q.max_step();
    if leaf {
        masks.insert(name.clone(), 0);
        return vec![(name, points)];
    }

    let mut parts: [Vec<PointRecord>; 8] = Default::default();
    for r in points {
        parts[child_index(q.dequantize_record(&r), &bounds) as usize].push(r);
    }
    let mut mask = 0u8;
    let mut out = Vec::new();
    let mut child_roots = Vec::new();
    for (k, part) in parts.into_iter().enumerate() {
        if part.is_empty() {
            continue;
        }
        mask |= 1 << k;
        let child = name.child(k as u8);
        let sub = build_node(part, child, bounds.octant(k as u8), q, cfg, masks);
        // the child's own payload is the first entry of its subtree
        child_roots.push(out.len());
        out.extend(sub);
    }
    masks.insert(name.clone(), mask);

    let mut children: Vec<&mut Vec<PointRecord>> = Vec::with_capacity(8);
    let mut rest = out.as_mut_slice();
    let mut consumed = 0;
    for &i in &child_roots {
        let (_, tail) = rest.split_at_mut(i - consumed);
        let (head, tail) = tail.split_at_mut(1);
        children.push(&mut head[0].1);
        consumed = i + 1;
        rest = tail;
    }
    let sampled = sample_into_parent(&bounds, cfg.sampling_grid_size, q, &mut children);
    out.insert(0, (name, sampled));
    out
}

/// Reads a chunk file and indexes it. Non-root payloads are spilled to
/// `<spill_dir>/<chunk>.nodes`; the chunk root stays in memory for stitching.
/// The chunk file is removed afterwards.
pub fn index_chunk(
    chunk: &ChunkInfo,
    root_bounds: &Aabb,
    q: &Quantization,
    cfg: &BuildConfig,
    spill_dir: &Path,
) -> Result<LocalOctree> {
    let points = match &chunk.path {
        Some(p) => decode_records(&std::fs::read(p)?),
        None => Vec::new(),
    };
    let bounds = chunk.name.bounds_in(root_bounds);
    let mut tree = index_points(points, &chunk.name, &bounds, q, cfg);

    let spill = Arc::new(spill_dir.join(format!("{}.nodes", chunk.name)));
    let mut w = BufWriter::with_capacity(1 << 20, File::create(spill.as_ref())?);
    let mut offset = 0u64;
    let mut buf = Vec::new();
    for (name, payload) in tree.payloads.iter_mut() {
        if *name == chunk.name {
            continue;
        }
        let Payload::Memory(pts) = payload else { continue };
        buf.clear();
        crate::cloud_io::encode_records(pts, &mut buf);
        w.write_all(&buf)?;
        let count = pts.len() as u64;
        *payload = Payload::Spilled {
            file: spill.clone(),
            offset,
            count,
        };
        offset += count * RECORD_SIZE as u64;
    }
    w.flush()?;
    if let Some(p) = &chunk.path {
        std::fs::remove_file(p)?;
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn q() -> Quantization {
        Quantization::new([0.001; 3], [0.0; 3])
    }

    fn cfg(max_node: u64, grid: u32) -> BuildConfig {
        BuildConfig {
            max_chunk_points: u64::MAX,
            max_node_points: max_node,
            sampling_grid_size: grid,
            worker_count: 1,
        }
    }

    fn rec(p: [f64; 3]) -> PointRecord {
        PointRecord::new(q().quantize(p), [1, 2, 3])
    }

    fn mem(t: &LocalOctree, n: &str) -> Vec<PointRecord> {
        t.payloads[&n.parse::<NodeName>().unwrap()].load().unwrap()
    }

    #[test]
    fn small_chunk_is_single_leaf() {
        let pts: Vec<_> = (0..100).map(|i| rec([i as f64 * 0.01, 0.5, 0.5])).collect();
        let t = index_points(pts.clone(), &NodeName::root(), &Aabb::new([0.0; 3], [1.0; 3]), &q(), &cfg(100, 4));
        assert_eq!(t.payloads.len(), 1);
        assert_eq!(mem(&t, "r"), pts);
        assert_eq!(t.child_masks[&NodeName::root()], 0);
    }

    #[test]
    fn shared_cell_keeps_one_in_parent() {
        // a and b share a cell of the root's 2^3 grid; c forces the split
        let a = rec([0.10, 0.1, 0.1]);
        let b = rec([0.20, 0.1, 0.1]);
        let c = rec([0.9, 0.9, 0.9]);
        let bounds = Aabb::new([0.0; 3], [1.0; 3]);
        let t = index_points(vec![a, b, c], &NodeName::root(), &bounds, &q(), &cfg(2, 2));
        assert_eq!(mem(&t, "r"), vec![a, c]);
        assert_eq!(mem(&t, "r0"), vec![b]);
        assert!(mem(&t, "r7").is_empty());
        assert_eq!(t.point_count(), 3);
    }

    #[test]
    fn first_arrival_wins() {
        let a = rec([0.55, 0.1, 0.1]);
        let b = rec([0.60, 0.1, 0.1]);
        let mut c0 = vec![a];
        let mut c1 = vec![b];
        let parent = sample_into_parent(&Aabb::new([0.0; 3], [1.0; 3]), 2, &q(), &mut [&mut c0, &mut c1]);
        assert_eq!(parent, vec![a]);
        assert!(c0.is_empty());
        assert_eq!(c1, vec![b]);
    }

    #[test]
    fn multiset_and_sparsity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..50_000)
            .map(|_| rec([rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()]))
            .collect();
        let b = Aabb::new([0.0; 3], [1.0; 3]);
        let t = index_points(pts.clone(), &NodeName::root(), &b, &q(), &cfg(1_000, 16));
        let mut all: Vec<_> = t.payloads.values().flat_map(|p| p.load().unwrap()).collect();
        let mut want = pts;
        all.sort_by_key(|r| r.to_bytes());
        want.sort_by_key(|r| r.to_bytes());
        assert_eq!(all, want);
        for (name, mask) in &t.child_masks {
            let nb = name.bounds_in(&b);
            let pts = t.payloads[name].load().unwrap();
            if *mask != 0 {
                let mut seen = HashSet::new();
                for r in &pts {
                    assert!(seen.insert(sampling_cell(q().dequantize_record(r), &nb, 16)));
                }
            } else {
                assert!(pts.len() as u64 <= 1_000);
            }
        }
    }

    #[test]
    fn duplicates_stop_at_scale_step() {
        let pts = vec![rec([0.5; 3]); 50];
        let t = index_points(pts, &NodeName::root(), &Aabb::new([0.0; 3], [1.0; 3]), &q(), &cfg(4, 2));
        assert_eq!(t.point_count(), 50);
        assert!(t.child_masks.keys().all(|n| n.level() <= MAX_LEVEL));
    }

    #[test]
    fn cell_index_edges() {
        let b = Aabb::new([0.0; 3], [1.0; 3]);
        assert_eq!(sampling_cell([0.0; 3], &b, 4), 0);
        assert_eq!(sampling_cell([1.0; 3], &b, 4), 63);
        assert_eq!(sampling_cell([0.3, 0.0, 0.0], &b, 4), 16);
    }
}
