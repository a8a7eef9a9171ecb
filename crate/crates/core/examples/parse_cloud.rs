//! Opens PLY and LAS files and reads records by range and by index.

use fastpoints::cloud_io::open_cloud;
use fastpoints::synthetic::{Distribution, SyntheticCloud};

fn main() -> fastpoints::Result<()> {
    let dir = tempfile::tempdir()?;
    let cloud = SyntheticCloud::new(Distribution::Planar, 10_000, 1);
    let ply = dir.path().join("plane.ply");
    let las = dir.path().join("plane.las");
    cloud.write_ply(&ply, false)?;
    cloud.write_las(&las)?;

    for path in [&ply, &las] {
        let src = open_cloud(path)?;
        let q = src.quantization()?;
        println!("{}: {:?}, {} points, color: {}", path.display(), src.header().format, src.point_count(), src.has_color());
        println!("  bounds {:?}", src.compute_bounds()?);
        for r in src.read_range(0, 3)? {
            println!("  {:?} -> {:?} rgb {:?}", r.position(), q.dequantize_record(&r), r.rgb());
        }
        let picked = src.read_indices(&[5, 500, 9_999], 4096)?;
        println!("  indices 5, 500, 9999 -> {:?}", picked.iter().map(|r| q.dequantize_record(r)).collect::<Vec<_>>());
    }
    Ok(())
}
