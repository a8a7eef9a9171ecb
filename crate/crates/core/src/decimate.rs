//! Exact-count uniform preview decimation.
//!
//! Index-stride sampling: output `i` is source record `floor(i * N / T)`.
//! Workers split the selected-index sequence into contiguous slices and read
//! only the spans holding their indices, so the result does not depend on
//! worker count or batch size. Float clouds whose quantization offset is
//! still unknown are instead scanned once in full, measuring the bounds and
//! keeping the selected records in the same pass.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::cloud_io::{encode_records, CloudSource, PointRecord, RECORD_SIZE};
use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::progress::Reporter;
use crate::CancelToken;

const SCAN_BATCH: u64 = 1 << 20;

#[derive(Debug, Clone)]
pub struct DecimationConfig {
    pub target_count: u64,
    pub worker_count: usize,
    /// Upper bound on the span of source records covered by one read.
    pub batch_size: u64,
}

impl Default for DecimationConfig {
    fn default() -> Self {
        Self {
            target_count: 1_000_000,
            worker_count: crate::default_workers(),
            batch_size: 65_536,
        }
    }
}

impl DecimationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_count == 0 {
            return Err(Error::InvalidConfig("target_count must be >= 1".into()));
        }
        if self.worker_count == 0 {
            return Err(Error::InvalidConfig("worker_count must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecimatedCloud {
    /// Selected records in ascending source order.
    pub points: Vec<PointRecord>,
    pub source_bounds: Aabb,
    pub source_count: u64,
}

impl DecimatedCloud {
    /// Raw 16-byte records, the `decimated.bin` layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.points.len() * RECORD_SIZE);
        encode_records(&self.points, &mut out);
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::with_capacity(1 << 20, File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        Ok(())
    }
}

/// Source index of the `i`-th selected point.
#[inline]
pub fn selected_index(i: u64, source_count: u64, target_count: u64) -> u64 {
    if source_count <= target_count {
        i
    } else {
        ((i as u128 * source_count as u128) / target_count as u128) as u64
    }
}

/// The strictly increasing indices kept when reducing `source_count` points
/// to at most `target_count`.
pub fn select_indices(source_count: u64, target_count: u64) -> Vec<u64> {
    let n = source_count.min(target_count);
    (0..n)
        .map(|i| selected_index(i, source_count, target_count))
        .collect()
}

/// Decimates `src` to `min(target, N)` records using `cfg.worker_count`
/// threads. `progress` receives non-decreasing fractions ending with 1.0 and
/// may be called from any worker.
pub fn decimate(
    src: &CloudSource,
    cfg: &DecimationConfig,
    progress: &(dyn Fn(f64) + Sync),
    cancel: &CancelToken,
) -> Result<DecimatedCloud> {
    cfg.validate()?;
    let source_count = src.point_count();
    let indices = select_indices(source_count, cfg.target_count);
    if src.quantization_pending() {
        return decimate_scanning(src, cfg, &indices, progress, cancel);
    }
    let source_bounds = src.bounds()?;

    let total = indices.len() as u64;
    let mut points = vec![PointRecord::default(); indices.len()];
    let reporter = Reporter::new(total, Some(progress));

    if !indices.is_empty() {
        let per = indices.len().div_ceil(cfg.worker_count);
        let results: Vec<Result<()>> = std::thread::scope(|scope| {
            let handles: Vec<_> = indices
                .chunks(per)
                .zip(points.chunks_mut(per))
                .map(|(idx, out)| {
                    let reporter = &reporter;
                    scope.spawn(move || gather(src, idx, out, cfg.batch_size, reporter, cancel))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("decimation worker panicked"))
                .collect()
        });
        for r in results {
            r?;
        }
    }
    reporter.finish();

    Ok(DecimatedCloud {
        points,
        source_bounds,
        source_count,
    })
}

/// Float clouds without a known offset: one sequential pass per worker both
/// measures the bounds and keeps the raw selected records, which are
/// quantized once the global minimum is known.
fn decimate_scanning(
    src: &CloudSource,
    cfg: &DecimationConfig,
    indices: &[u64],
    progress: &(dyn Fn(f64) + Sync),
    cancel: &CancelToken,
) -> Result<DecimatedCloud> {
    let n = src.point_count();
    let per = n.div_ceil(cfg.worker_count as u64).max(1);
    let reporter = Reporter::new(n, Some(progress));
    let parts: Vec<Result<(Aabb, Vec<([f64; 3], [u8; 3])>)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n)
            .step_by(per as usize)
            .map(|first| {
                let end = (first + per).min(n);
                let lo = indices.partition_point(|&i| i < first);
                let hi = indices.partition_point(|&i| i < end);
                let keep = &indices[lo..hi];
                let reporter = &reporter;
                scope.spawn(move || {
                    let mut bounds = Aabb::empty();
                    let mut raw = Vec::with_capacity(keep.len());
                    let mut at = first;
                    while at < end {
                        cancel.check()?;
                        let count = SCAN_BATCH.min(end - at);
                        let k0 = keep.partition_point(|&i| i < at);
                        let k1 = keep.partition_point(|&i| i < at + count);
                        let b = src.scan_keep(at, count, &keep[k0..k1], &mut raw)?;
                        if !b.is_empty() {
                            bounds = if bounds.is_empty() { b } else { bounds.union(&b) };
                        }
                        reporter.advance(count);
                        at += count;
                    }
                    Ok((bounds, raw))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("decimation worker panicked"))
            .collect()
    });
    let mut bounds = Aabb::empty();
    let mut raw = Vec::with_capacity(indices.len());
    for part in parts {
        let (b, r) = part?;
        if !b.is_empty() {
            bounds = if bounds.is_empty() { b } else { bounds.union(&b) };
        }
        raw.extend(r);
    }
    let source_bounds = src.finish_bounds(bounds);
    let q = src.quantization()?;
    let points = raw.into_iter().map(|(p, c)| PointRecord::new(q.quantize(p), c)).collect();
    reporter.finish();
    Ok(DecimatedCloud {
        points,
        source_bounds,
        source_count: n,
    })
}

fn gather(
    src: &CloudSource,
    indices: &[u64],
    out: &mut [PointRecord],
    batch: u64,
    reporter: &Reporter<'_>,
    cancel: &CancelToken,
) -> Result<()> {
    let mut buf = Vec::new();
    let mut done = 0;
    while done < indices.len() {
        cancel.check()?;
        let limit = indices[done] + batch;
        let end = done + indices[done..].partition_point(|&i| i < limit);
        buf.clear();
        src.read_indices_into(&indices[done..end], batch, &mut buf)?;
        out[done..end].copy_from_slice(&buf);
        reporter.advance((end - done) as u64);
        done = end;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_selection() {
        assert_eq!(select_indices(10, 5), vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn identity_when_target_covers_source() {
        assert_eq!(select_indices(100, 100), (0..100).collect::<Vec<_>>());
        assert_eq!(select_indices(7, 100), (0..7).collect::<Vec<_>>());
        assert!(select_indices(0, 5).is_empty());
    }

    #[test]
    fn great_hall_endpoints() {
        // floor(999_999 * 222_708_159 / 1_000_000) = 222_707_936
        let idx = select_indices(222_708_159, 1_000_000);
        assert_eq!(idx.len(), 1_000_000);
        assert_eq!(idx[0], 0);
        assert_eq!(*idx.last().unwrap(), 222_707_936);
    }

    #[test]
    fn config_validation() {
        let mut c = DecimationConfig::default();
        c.target_count = 0;
        assert!(c.validate().is_err());
        let mut c = DecimationConfig::default();
        c.worker_count = 0;
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn exact_increasing_uniform(n in 0u64..200_000, t in 1u64..5_000) {
            let idx = select_indices(n, t);
            prop_assert_eq!(idx.len() as u64, n.min(t));
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            if let Some(&last) = idx.last() {
                prop_assert!(last < n);
            }
            if n > t {
                let q = n / t;
                prop_assert!(idx.windows(2).all(|w| w[1] - w[0] == q || w[1] - w[0] == q + 1));
            }
        }
    }
}
