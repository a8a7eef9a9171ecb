//! Counting and distribution passes that split a cloud into chunk files.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{BuildConfig, NodeName};
use crate::cloud_io::{CloudSource, PointRecord, Quantization, RECORD_SIZE};
use crate::error::{Error, Result};
use crate::geometry::{child_index, Aabb};
use crate::progress::PassControl;

/// Finest counting grid: 8^7 = 2M cells.
pub const MAX_GRID_LEVEL: u32 = 7;
const PASS_BATCH: u64 = 65_536;
const FLUSH_BYTES: usize = 1 << 20;
const MAX_BUFFERED_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkInfo {
    pub name: NodeName,
    /// Range of grid cells (in octant-path order) covered by this chunk.
    pub first_cell: u64,
    pub cell_count: u64,
    pub point_count: u64,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkTable {
    pub grid_level: u32,
    pub root_bounds: Aabb,
    /// Per-cell point counts; cell index is the octant path read as base 8.
    pub counts: Vec<u64>,
    /// Chunks in breadth-first name order. Empty until [`merge_cells`].
    pub chunks: Vec<ChunkInfo>,
}

impl ChunkTable {
    pub fn total_points(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Chunk index of every cell.
    pub fn cell_to_chunk(&self) -> Vec<u32> {
        let mut map = vec![u32::MAX; self.counts.len()];
        for (i, c) in self.chunks.iter().enumerate() {
            for cell in c.first_cell..c.first_cell + c.cell_count {
                map[cell as usize] = i as u32;
            }
        }
        map
    }
}

/// `max(1, ceil(log8(points / max_chunk_points)))`, capped at [`MAX_GRID_LEVEL`].
pub fn grid_level_for(point_count: u64, max_chunk_points: u64) -> u32 {
    let mut level = 1;
    while level < MAX_GRID_LEVEL
        && (8u128.pow(level) * max_chunk_points as u128) < point_count as u128
    {
        level += 1;
    }
    level
}

/// Grid cell of `p` at `level`, found by descending the octants of `root`.
pub fn cell_of(p: [f64; 3], root: &Aabb, level: u32) -> u64 {
    let mut bounds = *root;
    let mut cell = 0u64;
    for _ in 0..level {
        let k = child_index(p, &bounds);
        cell = cell * 8 + k as u64;
        bounds = bounds.octant(k);
    }
    cell
}

fn batches(n: u64) -> Vec<(u64, u64)> {
    (0..n)
        .step_by(PASS_BATCH as usize)
        .map(|s| (s, PASS_BATCH.min(n - s)))
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .thread_name(|i| format!("fastpoints-build-{i}"))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))
}

/// First pass: counts points per grid cell. Workers keep local counters that
/// are summed at the end.
pub fn chunk_count_pass(
    src: &CloudSource,
    cfg: &BuildConfig,
    root_bounds: &Aabb,
    ctl: PassControl<'_>,
) -> Result<ChunkTable> {
    let n = src.point_count();
    let q = src.quantization()?;
    let level = grid_level_for(n, cfg.max_chunk_points);
    let cells = 8usize.pow(level);
    let reporter = ctl.reporter(n);
    let counts = pool(cfg.worker_count)?.install(|| {
        batches(n)
            .into_par_iter()
            .try_fold(
                || vec![0u64; cells],
                |mut counts, (first, count)| -> Result<Vec<u64>> {
                    ctl.check()?;
                    let recs = src.read_range(first, count)?;
                    for r in &recs {
                        counts[cell_of(q.dequantize_record(r), root_bounds, level) as usize] += 1;
                    }
                    reporter.advance(count);
                    Ok(counts)
                },
            )
            .try_reduce(
                || vec![0u64; cells],
                |mut a, b| {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                    Ok(a)
                },
            )
    })?;
    reporter.finish();
    Ok(ChunkTable {
        grid_level: level,
        root_bounds: *root_bounds,
        counts,
        chunks: Vec::new(),
    })
}

/// Merges sibling cells bottom-up: a full group of 8 collapses into its
/// parent when every sibling is itself collapsed and their sum is at most
/// `max_chunk_points`. Cells at the finest level are never split, so an
/// oversize cell stays a single chunk.
pub fn merge_cells(mut table: ChunkTable, cfg: &BuildConfig) -> ChunkTable {
    let level = table.grid_level;
    // Some(count): the node at this level is still a single candidate chunk
    let mut current: Vec<Option<u64>> = table.counts.iter().map(|&c| Some(c)).collect();
    let mut chunks = Vec::new();
    for l in (0..level).rev() {
        let mut next = Vec::with_capacity(current.len() / 8);
        for (parent, group) in current.chunks(8).enumerate() {
            let sum: Option<u64> = group.iter().copied().sum();
            match sum {
                Some(s) if s <= cfg.max_chunk_points => next.push(Some(s)),
                _ => {
                    for (k, c) in group.iter().enumerate() {
                        if let Some(count) = c {
                            chunks.push(chunk_at(l + 1, (parent * 8 + k) as u64, *count, level));
                        }
                    }
                    next.push(None);
                }
            }
        }
        current = next;
    }
    if let Some(count) = current[0] {
        chunks.push(chunk_at(0, 0, count, level));
    }
    chunks.sort_by(|a, b| a.name.cmp(&b.name));
    table.chunks = chunks;
    table
}

fn chunk_at(node_level: u32, index: u64, count: u64, grid_level: u32) -> ChunkInfo {
    let mut name = NodeName::root();
    for d in (0..node_level).rev() {
        name = name.child(((index >> (3 * d)) & 7) as u8);
    }
    let span = 8u64.pow(grid_level - node_level);
    ChunkInfo {
        name,
        first_cell: index * span,
        cell_count: span,
        point_count: count,
        path: None,
    }
}

/// Second pass: appends every point to its chunk file under `dir`.
///
/// Batches are decoded and routed in parallel but appended in source order,
/// so each chunk file preserves the relative order of its points.
pub fn chunk_distribute_pass(
    src: &CloudSource,
    table: &mut ChunkTable,
    dir: &Path,
    cfg: &BuildConfig,
    ctl: PassControl<'_>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let q = src.quantization()?;
    let cell_to_chunk = table.cell_to_chunk();
    let nchunks = table.chunks.len();
    for c in table.chunks.iter_mut() {
        c.path = (c.point_count > 0).then(|| dir.join(format!("{}.bin", c.name)));
        if let Some(p) = &c.path {
            std::fs::File::create(p)?;
        }
    }
    let paths: Vec<Option<PathBuf>> = table.chunks.iter().map(|c| c.path.clone()).collect();
    let mut buffers: Vec<Vec<u8>> = vec![Vec::new(); nchunks];
    let mut written = vec![0u64; nchunks];
    let mut buffered = 0usize;

    let n = src.point_count();
    let reporter = ctl.reporter(n);
    let pool = pool(cfg.worker_count)?;
    let all = batches(n);
    let router = Router {
        q,
        root: table.root_bounds,
        level: table.grid_level,
        cell_to_chunk: &cell_to_chunk,
    };
    for round in all.chunks(cfg.worker_count.max(1) * 2) {
        ctl.check()?;
        let routed: Vec<Vec<(u32, PointRecord)>> = pool.install(|| {
            round
                .par_iter()
                .map(|&(first, count)| -> Result<_> {
                    let recs = src.read_range(first, count)?;
                    Ok(recs.iter().map(|r| (router.route(r), *r)).collect())
                })
                .collect::<Result<_>>()
        })?;
        for batch in routed {
            let len = batch.len() as u64;
            for (chunk, r) in batch {
                let buf = &mut buffers[chunk as usize];
                buf.extend_from_slice(&r.to_bytes());
                written[chunk as usize] += 1;
                buffered += RECORD_SIZE;
                if buf.len() >= FLUSH_BYTES {
                    buffered -= buf.len();
                    append(paths[chunk as usize].as_deref(), buf)?;
                }
            }
            reporter.advance(len);
        }
        if buffered > MAX_BUFFERED_BYTES {
            for (i, buf) in buffers.iter_mut().enumerate() {
                append(paths[i].as_deref(), buf)?;
            }
            buffered = 0;
        }
    }
    for (i, buf) in buffers.iter_mut().enumerate() {
        append(paths[i].as_deref(), buf)?;
    }
    for (c, w) in table.chunks.iter().zip(&written) {
        if c.point_count != *w {
            return Err(Error::InconsistentChunks(format!(
                "chunk {} counted {} points but received {w}",
                c.name, c.point_count
            )));
        }
    }
    reporter.finish();
    Ok(())
}

struct Router<'a> {
    q: Quantization,
    root: Aabb,
    level: u32,
    cell_to_chunk: &'a [u32],
}

impl Router<'_> {
    #[inline]
    fn route(&self, r: &PointRecord) -> u32 {
        self.cell_to_chunk[cell_of(self.q.dequantize_record(r), &self.root, self.level) as usize]
    }
}

fn append(path: Option<&Path>, buf: &mut Vec<u8>) -> Result<()> {
    if buf.is_empty() {
        return Ok(());
    }
    let path = path.expect("points routed to an empty chunk");
    OpenOptions::new().append(true).open(path)?.write_all(buf)?;
    buf.clear();
    Ok(())
}
