//! Plans which nodes to load for a camera under a point budget, then
//! re-plans once the loads are done.

use fastpoints::cloud_io::open_cloud;
use fastpoints::octree::{build_octree, BuildConfig, OctreeDir};
use fastpoints::synthetic::{Distribution, SyntheticCloud};
use fastpoints::traverse::{plan_traversal, CameraState, NodeCache, TraversalConfig};
use fastpoints::CancelToken;

fn main() -> fastpoints::Result<()> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("cube.ply");
    SyntheticCloud::new(Distribution::Uniform, 300_000, 3).write_ply(&input, false)?;
    let cfg = BuildConfig {
        max_node_points: 20_000,
        ..BuildConfig::default()
    };
    let out = dir.path().join("octree");
    build_octree(&open_cloud(&input)?, &cfg, &out, None, &|_, _| {}, &CancelToken::new())?;
    let tree = OctreeDir::open(&out)?;
    let h = &tree.hierarchy;

    let cam = CameraState::look_at([50.0, -60.0, 50.0], [50.0, 50.0, 50.0], [0.0, 0.0, 1.0], 1.0, 16.0 / 9.0, 0.1, 500.0, 1080)?;
    let traversal = TraversalConfig {
        point_budget: 120_000,
        ..TraversalConfig::default()
    };
    let cache = NodeCache::new(traversal.max_cached_bytes);

    let first = plan_traversal(h, &cache, &cam, &traversal)?;
    println!("tick {}: load {:?}", first.tick_id, first.load_list);
    let events = cache.apply_sync(&first, h, &tree);
    println!("{} cache events, {} bytes resident", events.len(), cache.resident_bytes());

    let second = plan_traversal(h, &cache, &cam, &traversal)?;
    println!(
        "tick {}: render {} nodes, load {}, unload {}",
        second.tick_id,
        second.render_set.len(),
        second.load_list.len(),
        second.unload_list.len()
    );
    Ok(())
}
