//! Renders a frame of a built octree to a PPM image.
//!
//! ```text
//! cargo run --release --example render_frame -- frame.ppm
//! ```

use fastpoints::cloud_io::open_cloud;
use fastpoints::commands::{render, RenderOptions};
use fastpoints::octree::{build_octree, BuildConfig};
use fastpoints::synthetic::{Distribution, SyntheticCloud};
use fastpoints::CancelToken;

fn main() -> fastpoints::Result<()> {
    let image = std::env::args().nth(1).unwrap_or_else(|| "frame.ppm".into());
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("blobs.ply");
    SyntheticCloud::new(Distribution::Clustered, 400_000, 11).write_ply(&input, false)?;
    let out = dir.path().join("octree");
    build_octree(&open_cloud(&input)?, &BuildConfig::default(), &out, None, &|_, _| {}, &CancelToken::new())?;

    let opts = RenderOptions {
        position: Some([-30.0, -40.0, 70.0]),
        look_at: Some([25.0, 25.0, 25.0]),
        width: 640,
        height: 480,
        background: [20, 20, 30],
        ..RenderOptions::default()
    };
    let (frame, plan) = render(&out, &opts)?;
    frame.write_ppm(&image)?;
    let lit = frame.depth.iter().filter(|d| d.is_finite()).count();
    println!("{} nodes rendered, {lit} pixels covered, written to {image}", plan.render_set.len());
    Ok(())
}
