//! Writes a deterministic synthetic cloud to disk.
//!
//! ```text
//! cargo run --release --example generate_cloud -- cube.ply 1000000 uniform
//! cargo run --release --example generate_cloud -- blobs.las 100000 clustered
//! ```

use fastpoints::synthetic::{Distribution, SyntheticCloud};

fn main() -> fastpoints::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "cloud.ply".into());
    let count: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let distribution = match args.next().as_deref() {
        Some("clustered") => Distribution::Clustered,
        Some("planar") => Distribution::Planar,
        _ => Distribution::Uniform,
    };
    let cloud = SyntheticCloud::new(distribution, count, 42);
    if path.ends_with(".las") {
        cloud.write_las(&path)?;
    } else {
        cloud.write_ply(&path, path.ends_with(".ascii.ply"))?;
    }
    println!("wrote {count} {distribution:?} points to {path}");
    Ok(())
}
