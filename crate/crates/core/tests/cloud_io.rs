mod common;

use std::sync::Arc;

use proptest::prelude::*;

use fastpoints::cloud_io::{open_cloud, CloudFormat, LasWriter, Quantization};
use fastpoints::synthetic::{Distribution, SyntheticCloud};
use fastpoints::Error;

use common::*;

#[test]
fn ply_positions_match_generator() {
    let dir = tempfile::tempdir().unwrap();
    for dist in DISTRIBUTIONS {
        let cloud = SyntheticCloud::new(dist, 20_000, 3);
        let path = dir.path().join(format!("{dist:?}.ply"));
        cloud.write_ply(&path, false).unwrap();
        let src = open_cloud(&path).unwrap();
        let q = src.quantization().unwrap();
        assert_eq!(q.offset, generator_min(&cloud), "{dist:?}");
        assert_eq!(q.scale, [0.001; 3]);
        let read = sorted_positions(&src.read_range(0, src.point_count()).unwrap());
        assert_eq!(read, generator_positions(&cloud, &q), "{dist:?}");
    }
}

#[test]
fn ascii_and_binary_ply_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = SyntheticCloud::new(Distribution::Clustered, 3_000, 9);
    let bin = dir.path().join("b.ply");
    let txt = dir.path().join("a.ply");
    cloud.write_ply(&bin, false).unwrap();
    cloud.write_ply(&txt, true).unwrap();
    let (b, a) = (open_cloud(&bin).unwrap(), open_cloud(&txt).unwrap());
    assert_eq!(a.header().format, CloudFormat::PlyAscii);
    assert_eq!(b.read_range(0, 3_000).unwrap(), a.read_range(0, 3_000).unwrap());
    assert_eq!(b.read_range(1234, 17).unwrap(), a.read_range(1234, 17).unwrap());
}

#[test]
fn bounds_equal_linear_scan() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = SyntheticCloud::new(Distribution::Uniform, 10_000, 21);
    let path = dir.path().join("u.ply");
    cloud.write_ply(&path, false).unwrap();
    let src = open_cloud(&path).unwrap();
    let q = src.quantization().unwrap();
    let recs = src.read_range(0, 10_000).unwrap();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for r in &recs {
        let p = q.dequantize_record(r);
        for i in 0..3 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let b = src.compute_bounds().unwrap();
    assert_eq!((b.min, b.max), (lo, hi));
}

#[test]
fn concurrent_ranges_equal_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let path = ply_fixture(dir.path(), Distribution::Uniform, 100_000, 5);
    let src = Arc::new(open_cloud(&path).unwrap());
    let whole = src.read_range(0, 100_000).unwrap();
    let parts: Vec<_> = (0..8u64)
        .map(|k| {
            let s = src.clone();
            std::thread::spawn(move || s.read_range(k * 12_500, 12_500).unwrap())
        })
        .collect();
    let joined: Vec<_> = parts.into_iter().flat_map(|h| h.join().unwrap()).collect();
    assert_eq!(joined, whole);
}

#[test]
fn read_indices_matches_range() {
    let dir = tempfile::tempdir().unwrap();
    let src = open_cloud(ply_fixture(dir.path(), Distribution::Planar, 50_000, 1)).unwrap();
    let all = src.read_range(0, 50_000).unwrap();
    let idx: Vec<u64> = (0..50_000).step_by(37).collect();
    for batch in [1, 100, 65_536] {
        let got = src.read_indices(&idx, batch).unwrap();
        let want: Vec<_> = idx.iter().map(|&i| all[i as usize]).collect();
        assert_eq!(got, want, "batch {batch}");
    }
}

#[test]
fn out_of_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let src = open_cloud(ply_fixture(dir.path(), Distribution::Uniform, 100, 1)).unwrap();
    assert!(matches!(src.read_range(90, 11), Err(Error::IndexOutOfRange { first: 90, end: 101, count: 100 })));
    assert!(src.read_range(100, 0).unwrap().is_empty());
}

#[test]
fn las_fixture_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = SyntheticCloud::new(Distribution::Clustered, 10_000, 4);
    let path = dir.path().join("c.las");
    cloud.write_las(&path).unwrap();
    let src = open_cloud(&path).unwrap();
    assert_eq!(src.point_count(), 10_000);
    let q = src.quantization().unwrap();
    let recs = src.read_range(0, 10_000).unwrap();
    for ((p, rgb), r) in cloud.points().zip(&recs) {
        assert_eq!(r.position(), q.quantize(p));
        assert_eq!(r.rgb(), rgb);
    }
    let hb = src.header().bounds.unwrap();
    assert_eq!(src.compute_bounds().unwrap(), hb);
}

#[test]
fn unknown_extension_is_unsupported() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.xyz");
    std::fs::write(&p, b"1 2 3\n").unwrap();
    assert!(matches!(open_cloud(&p), Err(Error::UnsupportedFormat(_))));
}

fn las_case() -> impl Strategy<Value = (Quantization, Vec<[i32; 3]>)> {
    let scale = prop_oneof![Just(0.001), Just(0.01), Just(0.25), 1e-4..2.0f64];
    let offset = -1e6..1e6f64;
    (
        [scale.clone(), scale.clone(), scale],
        [offset.clone(), offset.clone(), offset],
        prop::collection::vec(prop::array::uniform3(-2_000_000..2_000_000i32), 1..200),
    )
        .prop_map(|(s, o, pts)| (Quantization::new(s, o), pts))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn las_dequantization_is_exact((q, pts) in las_case()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.las");
        let mut w = LasWriter::create(&path, 2, 2, q).unwrap();
        for p in &pts {
            w.write_raw(*p, [0, 0, 0]).unwrap();
        }
        w.finish().unwrap();
        let src = open_cloud(&path).unwrap();
        let sq = src.quantization().unwrap();
        let recs = src.read_range(0, pts.len() as u64).unwrap();
        for (p, r) in pts.iter().zip(&recs) {
            prop_assert_eq!(r.position(), *p);
            let oracle = [0, 1, 2].map(|i| p[i] as f64 * q.scale[i] + q.offset[i]);
            let got = sq.dequantize_record(r);
            for i in 0..3 {
                prop_assert_eq!(got[i].to_bits(), oracle[i].to_bits());
            }
        }
    }
}
