//! Serves a cloud over HTTP while its octree is still being built.
//!
//! ```text
//! cargo run --release --example serve_live -- 8080
//! curl localhost:8080/status
//! ```

use std::sync::Arc;
use std::time::Duration;

use fastpoints::cloud_io::open_cloud;
use fastpoints::commands::ConvertOptions;
use fastpoints::service::{serve, LiveBuild, LiveState, Phase, ServeConfig};
use fastpoints::synthetic::{Distribution, SyntheticCloud};
use fastpoints::CancelToken;

fn main() -> fastpoints::Result<()> {
    let port: u16 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8080);
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("cube.ply");
    SyntheticCloud::new(Distribution::Uniform, 2_000_000, 5).write_ply(&input, false)?;
    let out = dir.path().join("octree");

    let live = Arc::new(LiveState::new());
    let job = LiveBuild::spawn(live.clone(), open_cloud(&input)?, ConvertOptions::new(&out), CancelToken::new())?;
    let service = serve(&ServeConfig::new(port, &out), live.clone())?;
    println!("listening on {}", service.url("/status"));

    loop {
        let s = live.status();
        println!("{:<10} {:5.1}%  preview ready: {}", s.phase.as_str(), s.progress * 100.0, s.decimated_ready);
        if matches!(s.phase, Phase::Done | Phase::Failed) {
            break;
        }
        std::thread::sleep(Duration::from_millis(250));
    }
    let report = job.join()?;
    println!("built {} nodes; serving until interrupted", report.hierarchy.len());
    service.wait();
    Ok(())
}
