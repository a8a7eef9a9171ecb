//! Produces an exactly sized preview of a cloud with parallel readers.

use fastpoints::cloud_io::open_cloud;
use fastpoints::decimate::{decimate, select_indices, DecimationConfig};
use fastpoints::synthetic::{Distribution, SyntheticCloud};
use fastpoints::CancelToken;

fn main() -> fastpoints::Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("blobs.ply");
    SyntheticCloud::new(Distribution::Clustered, 500_000, 7).write_ply(&path, false)?;
    let src = open_cloud(&path)?;

    let cfg = DecimationConfig {
        target_count: 50_000,
        worker_count: 4,
        ..DecimationConfig::default()
    };
    let progress = |f: f64| eprint!("\rdecimating {:5.1}%", f * 100.0);
    let preview = decimate(&src, &cfg, &progress, &CancelToken::new())?;
    eprintln!();
    println!("kept {} of {} points", preview.points.len(), preview.source_count);
    println!("first indices: {:?}", &select_indices(preview.source_count, cfg.target_count)[..5]);

    let out = dir.path().join("decimated.bin");
    preview.write(&out)?;
    println!("{} bytes written", std::fs::metadata(&out)?.len());
    Ok(())
}
