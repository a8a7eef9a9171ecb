//! A traversal agent streams plans and cache events to a consumer loop that
//! applies a bounded number of actions per frame.

use std::sync::Arc;
use std::time::Duration;

use fastpoints::cloud_io::open_cloud;
use fastpoints::octree::{build_octree, BuildConfig, OctreeDir};
use fastpoints::synthetic::{Distribution, SyntheticCloud};
use fastpoints::traverse::{Action, CacheEvent, CameraState, Dispatcher, TraversalAgent, TraversalConfig};
use fastpoints::CancelToken;

fn main() -> fastpoints::Result<()> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("cube.ply");
    SyntheticCloud::new(Distribution::Uniform, 200_000, 9).write_ply(&input, false)?;
    let out = dir.path().join("octree");
    let cfg = BuildConfig {
        max_node_points: 5_000,
        ..BuildConfig::default()
    };
    build_octree(&open_cloud(&input)?, &cfg, &out, None, &|_, _| {}, &CancelToken::new())?;
    let tree = Arc::new(OctreeDir::open(&out)?);

    let traversal = TraversalConfig {
        point_budget: 60_000,
        max_actions_per_tick: 4,
        ..TraversalConfig::default()
    };
    let agent = TraversalAgent::spawn(Arc::new(tree.hierarchy.clone()), tree.clone(), traversal.clone(), 2, Duration::from_millis(5))?;
    agent.set_camera(CameraState::look_at([50.0, -80.0, 50.0], [50.0, 50.0, 50.0], [0.0, 0.0, 1.0], 1.0, 1.5, 0.1, 500.0, 720)?);

    // main-thread work queue, fed from cache events
    let main_queue: Dispatcher<Action> = Dispatcher::new();
    for frame in 0..40 {
        agent.events().drain_with(64, |ev| {
            if let CacheEvent::Loaded(name) = ev {
                let _ = main_queue.enqueue(Box::new(move || println!("  upload {name}")));
            }
        });
        let ran = main_queue.drain(traversal.max_actions_per_tick);
        if let Some(plan) = agent.take_plan() {
            if ran > 0 || !plan.load_list.is_empty() {
                println!("frame {frame}: {ran} actions, plan renders {} / loads {}", plan.render_set.len(), plan.load_list.len());
            }
        }
        std::thread::sleep(Duration::from_millis(16));
    }
    agent.shutdown();
    Ok(())
}
