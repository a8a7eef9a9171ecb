use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use super::{
    chunk_count_pass, chunk_distribute_pass, index_chunk, merge_cells, stitch, write_octree,
    BuildConfig, LocalOctree, OctreeHierarchy,
};
use crate::cloud_io::CloudSource;
use crate::decimate::DecimatedCloud;
use crate::error::{Error, Result};
use crate::geometry::cube_bounds_with_step;
use crate::progress::PassControl;
use crate::CancelToken;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum BuildPhase {
    Chunking,
    Indexing,
    Stitching,
    Done,
}

impl BuildPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            BuildPhase::Chunking => "Chunking",
            BuildPhase::Indexing => "Indexing",
            BuildPhase::Stitching => "Stitching",
            BuildPhase::Done => "Done",
        }
    }
}

/// Wall time of each build phase. `chunking` includes the bounds pass and
/// `stitching` includes writing the output.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BuildTimings {
    pub chunking: Duration,
    pub indexing: Duration,
    pub stitching: Duration,
    pub total: Duration,
}

/// Builds the octree of `src` into `out_dir`.
///
/// All work happens in a sibling staging directory that is renamed onto
/// `out_dir` only on success; on error or cancellation it is removed and
/// `out_dir` is left untouched. `out_dir` must be absent or empty.
/// `progress` receives a phase and a fraction that never decreases within
/// the phase.
pub fn build_octree(
    src: &CloudSource,
    cfg: &BuildConfig,
    out_dir: &Path,
    decimated: Option<&DecimatedCloud>,
    progress: &(dyn Fn(BuildPhase, f64) + Sync),
    cancel: &CancelToken,
) -> Result<(OctreeHierarchy, BuildTimings)> {
    cfg.validate()?;
    if out_dir.is_dir() && std::fs::read_dir(out_dir)?.next().is_some() {
        return Err(Error::InvalidConfig(format!(
            "output directory {} is not empty",
            out_dir.display()
        )));
    }
    let staging = staging_path(out_dir);
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    std::fs::create_dir_all(&staging)?;
    let result = run(src, cfg, &staging, decimated, progress, cancel);
    match result {
        Ok(r) => {
            if out_dir.is_dir() {
                std::fs::remove_dir(out_dir)?;
            }
            std::fs::rename(&staging, out_dir)?;
            if let Some(parent) = out_dir.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::File::open(parent)?.sync_all()?;
            }
            progress(BuildPhase::Done, 1.0);
            Ok(r)
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn staging_path(out_dir: &Path) -> PathBuf {
    let name = out_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "octree".into());
    out_dir.with_file_name(format!(".{name}.staging-{}", std::process::id()))
}

fn run(
    src: &CloudSource,
    cfg: &BuildConfig,
    staging: &Path,
    decimated: Option<&DecimatedCloud>,
    progress: &(dyn Fn(BuildPhase, f64) + Sync),
    cancel: &CancelToken,
) -> Result<(OctreeHierarchy, BuildTimings)> {
    let t0 = Instant::now();
    let mut timings = BuildTimings::default();
    let work = staging.join("work");
    std::fs::create_dir_all(&work)?;

    progress(BuildPhase::Chunking, 0.0);
    let source_bounds = src.compute_bounds()?;
    let q = src.quantization()?;
    let root_bounds = cube_bounds_with_step(&source_bounds, q.max_step());
    cancel.check()?;
    progress(BuildPhase::Chunking, 0.2);

    let count_cb = |f: f64| progress(BuildPhase::Chunking, 0.2 + 0.35 * f);
    let table = chunk_count_pass(src, cfg, &root_bounds, PassControl::new(cancel, &count_cb))?;
    let mut table = merge_cells(table, cfg);
    let dist_cb = |f: f64| progress(BuildPhase::Chunking, 0.55 + 0.45 * f);
    chunk_distribute_pass(src, &mut table, &work, cfg, PassControl::new(cancel, &dist_cb))?;
    timings.chunking = t0.elapsed();

    let t1 = Instant::now();
    progress(BuildPhase::Indexing, 0.0);
    let total = table.total_points().max(1);
    let done = AtomicU64::new(0);
    let last = Mutex::new(0.0f64);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count)
        .thread_name(|i| format!("fastpoints-index-{i}"))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let chunks: Vec<_> = table.chunks.iter().filter(|c| c.point_count > 0).collect();
    let locals: Vec<LocalOctree> = pool.install(|| {
        chunks
            .par_iter()
            .with_max_len(1)
            .map(|c| -> Result<LocalOctree> {
                cancel.check()?;
                let local = index_chunk(c, &root_bounds, &q, cfg, &work)?;
                let d = done.fetch_add(c.point_count, Ordering::Relaxed) + c.point_count;
                let f = d as f64 / total as f64;
                let mut last = last.lock().unwrap();
                if f > *last {
                    *last = f;
                    progress(BuildPhase::Indexing, f);
                }
                Ok(local)
            })
            .collect::<Result<_>>()
    })?;
    progress(BuildPhase::Indexing, 1.0);
    timings.indexing = t1.elapsed();

    let t2 = Instant::now();
    cancel.check()?;
    progress(BuildPhase::Stitching, 0.0);
    let skeleton = OctreeHierarchy::skeleton(
        root_bounds,
        source_bounds,
        q,
        cfg.max_node_points,
        cfg.sampling_grid_size,
    );
    let (h, payloads) = stitch(locals, skeleton)?;
    if h.total_points != src.point_count() {
        return Err(Error::InconsistentChunks(format!(
            "octree holds {} points, source has {}",
            h.total_points,
            src.point_count()
        )));
    }
    progress(BuildPhase::Stitching, 0.3);
    cancel.check()?;
    write_octree(&h, &payloads, decimated, staging)?;
    drop(payloads);
    std::fs::remove_dir_all(&work)?;
    std::fs::File::open(staging)?.sync_all()?;
    progress(BuildPhase::Stitching, 1.0);
    timings.stitching = t2.elapsed();
    timings.total = t0.elapsed();
    Ok((h, timings))
}
