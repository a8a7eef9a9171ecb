//! Grafts per-chunk local octrees under one global root.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::{sample_into_parent, LocalOctree, NodeEntry, NodeName, NodePayloads, OctreeHierarchy, Payload};
use crate::cloud_io::PointRecord;
use crate::error::{Error, Result};

/// Joins `locals` into `skeleton`, creating the intermediate nodes between
/// the root and each chunk root and filling them bottom-up with the same
/// first-per-cell sampling used inside chunks. Offsets are assigned in
/// breadth-first order.
pub fn stitch(
    locals: Vec<LocalOctree>,
    skeleton: OctreeHierarchy,
) -> Result<(OctreeHierarchy, NodePayloads)> {
    let roots: HashSet<NodeName> = locals.iter().map(|l| l.root.clone()).collect();
    if roots.len() != locals.len() {
        return Err(Error::InconsistentChunks("duplicate chunk root".into()));
    }
    for r in &roots {
        if let Some(a) = r.ancestors().find(|a| roots.contains(a)) {
            return Err(Error::InconsistentChunks(format!("chunk {a} overlaps chunk {r}")));
        }
    }

    let mut masks: BTreeMap<NodeName, u8> = BTreeMap::new();
    let mut payloads = NodePayloads::new();
    let mut created = BTreeSet::new();
    for local in locals {
        for a in local.root.ancestors() {
            if !masks.contains_key(&a) {
                created.insert(a.clone());
                masks.insert(a, 0);
            }
        }
        let mut link = local.root.clone();
        while let Some(parent) = link.parent() {
            *masks.get_mut(&parent).unwrap() |= 1 << link.octant().unwrap();
            link = parent;
        }
        masks.extend(local.child_masks);
        payloads.extend(local.payloads);
    }
    if masks.is_empty() {
        masks.insert(NodeName::root(), 0);
        created.insert(NodeName::root());
    }

    let q = skeleton.quantization;
    let grid = skeleton.grid_size;
    // deepest first so each intermediate samples from already-filled children
    for name in created.iter().rev() {
        let mask = masks[name];
        let mut kids: Vec<(NodeName, Vec<PointRecord>)> = Vec::new();
        for k in 0..8u8 {
            if mask & (1 << k) != 0 {
                let c = name.child(k);
                let pts = payloads.get(&c).map(Payload::load).transpose()?.unwrap_or_default();
                kids.push((c, pts));
            }
        }
        let bounds = name.bounds_in(&skeleton.root_bounds);
        let mut refs: Vec<&mut Vec<PointRecord>> = kids.iter_mut().map(|(_, v)| v).collect();
        let sampled = sample_into_parent(&bounds, grid, &q, &mut refs);
        for (c, pts) in kids {
            payloads.insert(c, Payload::Memory(pts));
        }
        payloads.insert(name.clone(), Payload::Memory(sampled));
    }

    let mut h = skeleton;
    h.nodes.clear();
    for (name, mask) in masks {
        let num_points = payloads.get(&name).map_or(0, Payload::len);
        h.nodes.insert(
            name.clone(),
            NodeEntry {
                level: name.level() as u32,
                child_mask: mask,
                num_points,
                byte_offset: 0,
                byte_size: 0,
                bounds: name.bounds_in(&h.root_bounds),
                name,
            },
        );
    }
    h.total_points = h.nodes.values().map(|n| n.num_points).sum();
    h.assign_offsets();
    Ok((h, payloads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud_io::Quantization;
    use crate::geometry::Aabb;
    use crate::octree::{index_points, BuildConfig};

    fn q() -> Quantization {
        Quantization::new([0.001; 3], [0.0; 3])
    }

    fn skeleton() -> OctreeHierarchy {
        let b = Aabb::new([0.0; 3], [8.0; 3]);
        OctreeHierarchy::skeleton(b, b, q(), 4, 4)
    }

    fn cfg() -> BuildConfig {
        BuildConfig {
            max_chunk_points: 1000,
            max_node_points: 4,
            sampling_grid_size: 4,
            worker_count: 1,
        }
    }

    fn local(name: &str, pts: &[[f64; 3]]) -> LocalOctree {
        let name: NodeName = name.parse().unwrap();
        let recs: Vec<_> = pts.iter().map(|&p| PointRecord::new(q().quantize(p), [0; 3])).collect();
        let b = name.bounds_in(&skeleton().root_bounds);
        index_points(recs, &name, &b, &q(), &cfg())
    }

    fn n(s: &str) -> NodeName {
        s.parse().unwrap()
    }

    #[test]
    fn root_mask_from_two_chunks() {
        let (h, _) = stitch(
            vec![local("r0", &[[1.0; 3]]), local("r4", &[[5.0, 1.0, 1.0]])],
            skeleton(),
        )
        .unwrap();
        assert_eq!(h.root().child_mask, 0b0001_0001);
        assert_eq!(h.total_points, 2);
        h.validate().unwrap();
    }

    #[test]
    fn single_root_chunk_is_identity() {
        let l = local("r", &[[1.0; 3], [2.0; 3], [7.0; 3]]);
        let before: Vec<_> = l.payloads.iter().map(|(k, v)| (k.clone(), v.load().unwrap())).collect();
        let (h, p) = stitch(vec![l], skeleton()).unwrap();
        let after: Vec<_> = p.iter().map(|(k, v)| (k.clone(), v.load().unwrap())).collect();
        assert_eq!(before, after);
        assert_eq!(h.len(), 1);
    }

    #[test]
    fn mixed_levels_create_intermediate() {
        let mut locals = vec![local("r0", &[[1.0; 3], [1.5; 3]])];
        let mut all = vec![[1.0; 3], [1.5; 3]];
        for k in 0..8u8 {
            let b = n(&format!("r1{k}")).bounds_in(&skeleton().root_bounds);
            let p = [b.min[0] + 0.3, b.min[1] + 0.3, b.min[2] + 0.3];
            locals.push(local(&format!("r1{k}"), &[p]));
            all.push(p);
        }
        let (h, payloads) = stitch(locals, skeleton()).unwrap();
        h.validate().unwrap();
        assert!(h.get(&n("r1")).is_some());
        assert_eq!(h.root().child_mask, 0b11);
        let mut got: Vec<_> = payloads.values().flat_map(|p| p.load().unwrap()).collect();
        let mut want: Vec<_> = all.iter().map(|&p| PointRecord::new(q().quantize(p), [0; 3])).collect();
        got.sort_by_key(|r| r.to_bytes());
        want.sort_by_key(|r| r.to_bytes());
        assert_eq!(got, want);
    }

    #[test]
    fn overlapping_chunks_rejected() {
        let r = stitch(vec![local("r1", &[]), local("r12", &[])], skeleton());
        assert!(matches!(r, Err(Error::InconsistentChunks(_))));
    }

    #[test]
    fn empty_input_gives_empty_root() {
        let (h, _) = stitch(vec![], skeleton()).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.root().num_points, 0);
    }
}
