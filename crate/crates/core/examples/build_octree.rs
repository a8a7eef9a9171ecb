//! Builds an octree directory and inspects it.
//!
//! ```text
//! cargo run --release --example build_octree -- [input.ply|input.las] [out_dir]
//! ```

use std::path::PathBuf;

use fastpoints::cloud_io::open_cloud;
use fastpoints::octree::{build_octree, BuildConfig, NodeName, OctreeDir};
use fastpoints::synthetic::{Distribution, SyntheticCloud};
use fastpoints::CancelToken;

fn main() -> fastpoints::Result<()> {
    let scratch = tempfile::tempdir()?;
    let mut args = std::env::args().skip(1);
    let input = match args.next() {
        Some(p) => PathBuf::from(p),
        None => {
            let p = scratch.path().join("cube.ply");
            SyntheticCloud::new(Distribution::Uniform, 1_000_000, 42).write_ply(&p, false)?;
            p
        }
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| scratch.path().join("octree"));

    let src = open_cloud(&input)?;
    let progress = |phase: fastpoints::octree::BuildPhase, f: f64| eprint!("\r{:<10} {:5.1}%", phase.as_str(), f * 100.0);
    let (h, timings) = build_octree(&src, &BuildConfig::default(), &out, None, &progress, &CancelToken::new())?;
    eprintln!();
    println!("{} points in {} nodes, depth {}", h.total_points, h.len(), h.depth());
    println!("nodes per level: {:?}", h.level_histogram());
    println!("{timings:?}");

    let dir = OctreeDir::open(&out)?;
    let root = dir.read_node(&NodeName::root())?;
    println!("root holds {} sampled points", root.len());
    Ok(())
}
