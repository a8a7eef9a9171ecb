#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use glam::{DMat4, DVec3, DVec4};
use rand::Rng;

use fastpoints::cloud_io::{open_cloud, CloudSource, PointRecord, Quantization};
use fastpoints::geometry::Aabb;
use fastpoints::octree::{build_octree, BuildConfig, NodeEntry, NodeName, OctreeDir, OctreeHierarchy};
use fastpoints::raster::{pixel_of, RenderTarget};
use fastpoints::synthetic::{Distribution, SyntheticCloud};
use fastpoints::traverse::CameraState;
use fastpoints::CancelToken;

pub const DISTRIBUTIONS: [Distribution; 3] = [Distribution::Uniform, Distribution::Clustered, Distribution::Planar];

/// Writes a binary float PLY fixture and returns its path.
pub fn ply_fixture(dir: &Path, dist: Distribution, count: u64, seed: u64) -> PathBuf {
    let path = dir.join(format!("{dist:?}-{count}-{seed}.ply"));
    SyntheticCloud::new(dist, count, seed).write_ply(&path, false).unwrap();
    path
}

/// Quantized positions of a synthetic cloud computed straight from the
/// generator, without reading any file: values round-trip through `f32` as
/// in the PLY and are quantized against `q`.
pub fn generator_positions(cloud: &SyntheticCloud, q: &Quantization) -> Vec<[i32; 3]> {
    let mut v: Vec<[i32; 3]> = cloud.points().map(|(p, _)| q.quantize(p.map(|c| c as f32 as f64))).collect();
    v.sort_unstable();
    v
}

/// Raw minimum of the generator's `f32` positions: the default PLY offset.
pub fn generator_min(cloud: &SyntheticCloud) -> [f64; 3] {
    cloud.points().fold([f64::INFINITY; 3], |m, (p, _)| {
        [0, 1, 2].map(|i| m[i].min(p[i] as f32 as f64))
    })
}

pub fn build(src: &CloudSource, cfg: &BuildConfig, out: &Path) -> OctreeHierarchy {
    build_octree(src, cfg, out, None, &|_, _| {}, &CancelToken::new()).unwrap().0
}

pub fn build_fixture(dir: &Path, dist: Distribution, count: u64, cfg: &BuildConfig) -> (CloudSource, OctreeDir) {
    let src = open_cloud(ply_fixture(dir, dist, count, 7)).unwrap();
    let out = dir.join(format!("octree-{dist:?}-{count}"));
    build(&src, cfg, &out);
    (src, OctreeDir::open(&out).unwrap())
}

/// Every node payload, read back from disk.
pub fn payloads(o: &OctreeDir) -> BTreeMap<NodeName, Vec<PointRecord>> {
    o.hierarchy.iter().map(|e| (e.name.clone(), o.read_node(&e.name).unwrap())).collect()
}

pub fn sorted_positions<'a>(recs: impl IntoIterator<Item = &'a PointRecord>) -> Vec<[i32; 3]> {
    let mut v: Vec<[i32; 3]> = recs.into_iter().map(|r| r.position()).collect();
    v.sort_unstable();
    v
}

/// Sampling-grid cell of `p` inside `b`, computed independently of the
/// library.
pub fn grid_cell(p: [f64; 3], b: &Aabb, grid: u32) -> [u32; 3] {
    [0, 1, 2].map(|i| {
        let t = (p[i] - b.min[i]) / (b.max[i] - b.min[i]);
        ((t * grid as f64).floor() as i64).clamp(0, grid as i64 - 1) as u32
    })
}

/// A complete octree of the given depth over `[0, 100]^3` with node sizes
/// from `size`.
pub fn full_tree(depth: usize, mut size: impl FnMut(&NodeName) -> u64) -> OctreeHierarchy {
    let root = Aabb::new([0.0; 3], [100.0; 3]);
    let mut h = OctreeHierarchy::skeleton(root, root, Quantization::new([0.001; 3], [0.0; 3]), 1000, 128);
    let mut level = vec![NodeName::root()];
    for d in 0..=depth {
        let mut next = Vec::new();
        for name in level {
            let n = size(&name);
            h.nodes.insert(
                name.clone(),
                NodeEntry {
                    name: name.clone(),
                    level: d as u32,
                    child_mask: if d < depth { 0xFF } else { 0 },
                    num_points: n,
                    byte_offset: 0,
                    byte_size: n * 16,
                    bounds: name.bounds_in(&root),
                },
            );
            h.total_points += n;
            if d < depth {
                next.extend((0..8).map(|k| name.child(k)));
            }
        }
        level = next;
    }
    h.assign_offsets();
    h
}

pub fn random_unit(rng: &mut impl Rng) -> DVec3 {
    loop {
        let v = DVec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let l = v.length();
        if l > 0.1 && l <= 1.0 {
            return v / l;
        }
    }
}

/// A random valid camera looking roughly toward `around`.
pub fn random_camera(rng: &mut impl Rng, around: &Aabb) -> CameraState {
    let c = around.center();
    let side = around.extent().max_element();
    loop {
        let pos = c + random_unit(rng) * side * rng.gen_range(0.2..3.0);
        let target = c + random_unit(rng) * side * rng.gen_range(0.0..0.6);
        let up = random_unit(rng);
        let fov = rng.gen_range(20.0f64..110.0).to_radians();
        let aspect = rng.gen_range(0.5..2.0);
        let near = side * rng.gen_range(0.001..0.05);
        let far = side * rng.gen_range(2.0..6.0);
        let h = rng.gen_range(64..1200);
        if let Ok(cam) = CameraState::look_at(pos.to_array(), target.to_array(), up.to_array(), fov, aspect, near, far, h) {
            return cam;
        }
    }
}

/// View-projection matrix built with glam's right-handed look-at and GL
/// perspective, independent of the library's camera code.
pub fn view_projection(cam: &CameraState) -> DMat4 {
    let eye = DVec3::from_array(cam.position);
    let fwd = DVec3::from_array(cam.forward).normalize();
    let view = DMat4::look_to_rh(eye, fwd, DVec3::from_array(cam.up));
    let proj = DMat4::perspective_rh_gl(cam.vertical_fov_radians, cam.aspect, cam.near_plane, cam.far_plane);
    proj * view
}

/// Clip-volume classification of `p`: `Some(inside)` when `p` is at least
/// `margin` (in normalized device units) away from every boundary, `None`
/// when it is too close to call.
pub fn clip_inside(vp: &DMat4, p: DVec3, margin: f64) -> Option<bool> {
    let c: DVec4 = *vp * p.extend(1.0);
    if c.w.abs() < 1e-12 {
        return None;
    }
    if c.w < 0.0 {
        return Some(false);
    }
    let n = [c.x / c.w, c.y / c.w, c.z / c.w];
    let worst = n.iter().map(|v| 1.0 - v.abs()).fold(f64::INFINITY, f64::min);
    if worst.abs() < margin {
        None
    } else {
        Some(worst > 0.0)
    }
}

/// Sequential z-buffer keeping the nearest point per pixel; equal depths
/// keep the smaller color word, matching the packed-minimum rule.
pub fn zbuffer_oracle(points: &[PointRecord], q: &Quantization, cam: &CameraState, bg: &RenderTarget) -> RenderTarget {
    let basis = cam.basis().unwrap();
    let (w, h) = (bg.width, bg.height);
    let mut best: Vec<Option<(f32, u32, [u8; 3])>> = vec![None; (w * h) as usize];
    for r in points {
        let p = DVec3::from_array(q.dequantize_record(r));
        let Some((x, y, d)) = pixel_of(cam, &basis, w, h, p) else { continue };
        let rgb = r.rgb();
        let word = u32::from_le_bytes([rgb[0], rgb[1], rgb[2], 255]);
        let cell = &mut best[(y * w + x) as usize];
        let replace = match cell {
            None => true,
            Some((bd, bw, _)) => d < *bd || (d == *bd && word < *bw),
        };
        if replace {
            *cell = Some((d, word, rgb));
        }
    }
    let mut out = bg.clone();
    for (i, c) in best.into_iter().enumerate() {
        if let Some((d, _, rgb)) = c {
            if d <= out.depth[i] {
                out.depth[i] = d;
                out.color[i] = rgb;
            }
        }
    }
    out
}

/// Random records inside `[0, 100]^3` at millimeter quantization.
pub fn random_records(rng: &mut impl Rng, n: usize) -> Vec<PointRecord> {
    (0..n)
        .map(|_| {
            PointRecord::new(
                [rng.gen_range(0..100_000), rng.gen_range(0..100_000), rng.gen_range(0..100_000)],
                [rng.gen(), rng.gen(), rng.gen()],
            )
        })
        .collect()
}

/// Projected pixel radius from the written-out formula.
pub fn oracle_priority(b: &Aabb, cam: &CameraState) -> f64 {
    let r = b.extent().length() / 2.0;
    let dist = b.center().distance(DVec3::from_array(cam.position));
    if dist <= r {
        return f64::INFINITY;
    }
    let d = (dist - r).max(cam.near_plane);
    r / d * (cam.screen_height_pixels as f64 / (2.0 * (cam.vertical_fov_radians / 2.0).tan()))
}

/// Nodes that pass visibility and the pixel threshold, together with every
/// ancestor.
pub fn eligible_nodes(h: &OctreeHierarchy, cam: &CameraState, min_px: f64) -> BTreeMap<NodeName, f64> {
    let f = fastpoints::traverse::extract_frustum(cam).unwrap();
    let mut out = BTreeMap::new();
    for e in h.iter() {
        let parent_ok = e.name.parent().is_none_or(|p| out.contains_key(&p));
        let pr = oracle_priority(&e.bounds, cam);
        if parent_ok && fastpoints::traverse::aabb_visible(&e.bounds, &f) && pr >= min_px {
            out.insert(e.name.clone(), pr);
        }
    }
    out
}

/// Eligible nodes in rank order (priority descending, name ascending), cut
/// at the first one that would exceed the budget.
pub fn rank_prefix_oracle(h: &OctreeHierarchy, cam: &CameraState, budget: u64, min_px: f64) -> Vec<NodeName> {
    let mut ranked: Vec<(NodeName, f64)> = eligible_nodes(h, cam, min_px).into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut total = 0;
    let mut out = Vec::new();
    for (n, _) in ranked {
        let k = h.get(&n).unwrap().num_points;
        if total + k > budget {
            break;
        }
        total += k;
        out.push(n);
    }
    out
}

/// Value of a selection: number of infinite priorities, then the sum of the
/// finite ones added in descending order.
pub fn selection_value(prios: &mut [f64]) -> (usize, f64) {
    prios.sort_by(|a, b| b.total_cmp(a));
    let inf = prios.iter().filter(|p| p.is_infinite()).count();
    (inf, prios.iter().filter(|p| p.is_finite()).sum())
}

/// Exhaustive search over every parent-closed set of eligible nodes within
/// the budget, maximizing summed priority. Returns the best value and how
/// many sets were enumerated.
pub fn exhaustive_best(h: &OctreeHierarchy, cam: &CameraState, budget: u64, min_px: f64) -> ((usize, f64), u64) {
    let elig = eligible_nodes(h, cam, min_px);
    struct Search<'a> {
        h: &'a OctreeHierarchy,
        elig: &'a BTreeMap<NodeName, f64>,
        budget: u64,
        best: (usize, f64),
        sets: u64,
    }
    impl Search<'_> {
        fn go(&mut self, frontier: &[NodeName], chosen: &mut Vec<f64>, used: u64) {
            let Some((first, rest)) = frontier.split_first() else {
                self.sets += 1;
                let v = selection_value(&mut chosen.clone());
                if v.0 > self.best.0 || (v.0 == self.best.0 && v.1 > self.best.1) {
                    self.best = v;
                }
                return;
            };
            self.go(rest, chosen, used);
            let e = self.h.get(first).unwrap();
            if used + e.num_points <= self.budget {
                let mut next = rest.to_vec();
                next.extend(e.children().filter(|c| self.elig.contains_key(c)));
                chosen.push(self.elig[first]);
                self.go(&next, chosen, used + e.num_points);
                chosen.pop();
            }
        }
    }
    let mut s = Search {
        h,
        elig: &elig,
        budget,
        best: (0, 0.0),
        sets: 0,
    };
    let start: Vec<NodeName> = elig.contains_key(&NodeName::root()).then(NodeName::root).into_iter().collect();
    s.go(&start, &mut Vec::new(), 0);
    (s.best, s.sets)
}

/// Payload reader producing `num_points` synthetic records per node.
pub struct FakeReader;

impl fastpoints::traverse::NodeReader for FakeReader {
    fn read_node(&self, e: &NodeEntry) -> fastpoints::Result<Vec<PointRecord>> {
        Ok(vec![PointRecord::default(); e.num_points as usize])
    }
}
