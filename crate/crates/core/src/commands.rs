//! The operations behind the `fastpoints` command-line verbs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::cloud_io::CloudSource;
use crate::decimate::{decimate, DecimatedCloud, DecimationConfig};
use crate::error::{Error, Result};
use crate::octree::{build_octree, decode_hierarchy, BuildConfig, BuildPhase, OctreeDir, OctreeHierarchy, HIERARCHY_FILE};
use crate::raster::{render_view, RenderTarget};
use crate::service::Phase;
use crate::traverse::{plan_traversal, CameraState, NodeCache, TraversalConfig, TraversalPlan};
use crate::CancelToken;

/// Receives pipeline progress. Called from worker threads.
pub trait ConvertObserver: Sync {
    fn phase(&self, phase: Phase, fraction: f64);

    /// The preview is ready, before octree construction starts.
    fn decimated(&self, _cloud: &DecimatedCloud) {}
}

/// Discards all progress.
pub struct Silent;

impl ConvertObserver for Silent {
    fn phase(&self, _: Phase, _: f64) {}
}

/// Writes `PHASE <name> <fraction>` lines to stderr, at most one per
/// percent of progress.
#[derive(Default)]
pub struct StderrProgress {
    last: std::sync::Mutex<Option<(Phase, f64)>>,
}

impl ConvertObserver for StderrProgress {
    fn phase(&self, phase: Phase, fraction: f64) {
        let mut last = self.last.lock().unwrap();
        let emit = match *last {
            Some((p, f)) => p != phase || fraction >= f + 0.01 || (fraction >= 1.0 && f < 1.0),
            None => true,
        };
        if emit {
            *last = Some((phase, fraction));
            eprintln!("PHASE {} {:.4}", phase.as_str(), fraction);
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvertOptions {
    pub out_dir: PathBuf,
    pub decimation: DecimationConfig,
    pub build: BuildConfig,
}

impl ConvertOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            decimation: DecimationConfig::default(),
            build: BuildConfig::default(),
        }
    }

    pub fn with_workers(mut self, n: usize) -> Self {
        self.decimation.worker_count = n;
        self.build.worker_count = n;
        self
    }
}

/// Wall time per pipeline phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub decimating: Duration,
    pub chunking: Duration,
    pub indexing: Duration,
    pub stitching: Duration,
    pub total: Duration,
}

impl PhaseTimings {
    pub fn rows(&self) -> [(&'static str, Duration); 4] {
        [
            ("decimating", self.decimating),
            ("chunking", self.chunking),
            ("indexing", self.indexing),
            ("stitching", self.stitching),
        ]
    }

    /// `phase,seconds` CSV with a header and a final `total` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("phase,seconds\n");
        for (name, d) in self.rows() {
            s.push_str(&format!("{name},{:.6}\n", d.as_secs_f64()));
        }
        s.push_str(&format!("total,{:.6}\n", self.total.as_secs_f64()));
        s
    }
}

#[derive(Debug, Clone)]
pub struct ConvertReport {
    pub hierarchy: OctreeHierarchy,
    pub decimated_count: u64,
    pub timings: PhaseTimings,
}

/// Decimates `src`, hands the preview to `observer`, then builds the octree
/// into `opts.out_dir` with the preview as `decimated.bin`.
pub fn convert(
    src: &CloudSource,
    opts: &ConvertOptions,
    observer: &dyn ConvertObserver,
    cancel: &CancelToken,
) -> Result<ConvertReport> {
    opts.decimation.validate()?;
    opts.build.validate()?;
    let t0 = Instant::now();
    observer.phase(Phase::Decimating, 0.0);
    let progress = |f: f64| observer.phase(Phase::Decimating, f);
    let preview = decimate(src, &opts.decimation, &progress, cancel)?;
    observer.decimated(&preview);
    let decimating = t0.elapsed();

    let on_build = |p: BuildPhase, f: f64| {
        let phase = match p {
            BuildPhase::Chunking => Phase::Chunking,
            BuildPhase::Indexing => Phase::Indexing,
            BuildPhase::Stitching => Phase::Stitching,
            // reported by the caller once the output is published
            BuildPhase::Done => return,
        };
        observer.phase(phase, f);
    };
    let (hierarchy, bt) = build_octree(src, &opts.build, &opts.out_dir, Some(&preview), &on_build, cancel)?;
    let timings = PhaseTimings {
        decimating,
        chunking: bt.chunking,
        indexing: bt.indexing,
        stitching: bt.stitching,
        total: t0.elapsed(),
    };
    Ok(ConvertReport {
        hierarchy,
        decimated_count: preview.points.len() as u64,
        timings,
    })
}

/// Summary of a built directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Info {
    pub points: u64,
    pub nodes: usize,
    pub depth: u32,
    pub bytes: u64,
    pub levels: Vec<usize>,
}

impl fmt::Display for Info {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "points: {}", self.points)?;
        writeln!(f, "nodes: {}, depth: {}", self.nodes, self.depth)?;
        writeln!(f, "bytes: {}", self.bytes)?;
        for (level, n) in self.levels.iter().enumerate() {
            writeln!(f, "level {level}: {n}")?;
        }
        Ok(())
    }
}

pub fn info(dir: &Path) -> Result<Info> {
    let o = OctreeDir::open(dir)?;
    let h = &o.hierarchy;
    Ok(Info {
        points: h.total_points,
        nodes: h.len(),
        depth: h.depth(),
        bytes: h.total_bytes(),
        levels: h.level_histogram(),
    })
}

/// Re-parses `hierarchy.bin` without validation, for cross-checking.
pub fn raw_hierarchy(dir: &Path) -> Result<OctreeHierarchy> {
    let o = OctreeDir::open(dir)?;
    let bytes = std::fs::read(dir.join(HIERARCHY_FILE))?;
    let mut h = o.hierarchy.clone();
    h.nodes = decode_hierarchy(&bytes, &h.root_bounds)?;
    Ok(h)
}

#[derive(Debug, Clone)]
pub struct RenderOptions {
    /// Defaults to a view from the (+x, +y, +z) diagonal of the root cube.
    pub position: Option<[f64; 3]>,
    /// Defaults to the root cube center.
    pub look_at: Option<[f64; 3]>,
    pub up: [f64; 3],
    pub fov_degrees: f64,
    pub width: u32,
    pub height: u32,
    pub budget: u64,
    pub min_projected_pixels: f64,
    pub background: [u8; 3],
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            position: None,
            look_at: None,
            up: [0.0, 0.0, 1.0],
            fov_degrees: 60.0,
            width: 800,
            height: 600,
            budget: TraversalConfig::default().point_budget,
            min_projected_pixels: TraversalConfig::default().min_projected_pixels,
            background: [0, 0, 0],
        }
    }
}

impl RenderOptions {
    pub fn camera(&self, h: &OctreeHierarchy) -> Result<CameraState> {
        let root = h.root_bounds;
        let c = root.center();
        let side = root.extent().max_element().max(1e-9);
        let target = self.look_at.unwrap_or(c.to_array());
        let pos = self.position.unwrap_or((c + glam::DVec3::splat(side)).to_array());
        let dist = glam::DVec3::from_array(pos).distance(c);
        let near = (side * 1e-4).max(1e-6);
        let far = dist + side * 4.0;
        let mut up = self.up;
        let fwd = glam::DVec3::from_array(target) - glam::DVec3::from_array(pos);
        if fwd.normalize_or_zero().cross(glam::DVec3::from_array(up)).length() < 1e-6 {
            up = [0.0, 1.0, 0.0];
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("image size must be positive".into()));
        }
        CameraState::look_at(
            pos,
            target,
            up,
            self.fov_degrees.to_radians(),
            self.width as f64 / self.height as f64,
            near,
            far,
            self.height,
        )
    }

    pub fn traversal(&self) -> TraversalConfig {
        TraversalConfig {
            point_budget: self.budget,
            min_projected_pixels: self.min_projected_pixels,
            max_cached_bytes: u64::MAX,
            ..TraversalConfig::default()
        }
    }
}

/// Plans one traversal with every load completed synchronously, then
/// renders the resulting render set. Returns the image and the plan that
/// was rendered.
pub fn render(dir: &Path, opts: &RenderOptions) -> Result<(RenderTarget, TraversalPlan)> {
    let o = OctreeDir::open(dir)?;
    let h = &o.hierarchy;
    let cam = opts.camera(h)?;
    let cfg = opts.traversal();
    let cache = NodeCache::new(cfg.max_cached_bytes);
    let first = plan_traversal(h, &cache, &cam, &cfg)?;
    for e in cache.apply_sync(&first, h, &o) {
        if let crate::traverse::CacheEvent::LoadFailed(name, msg) = e {
            return Err(Error::MalformedOctree(format!("loading {name}: {msg}")));
        }
    }
    let plan = plan_traversal(h, &cache, &cam, &cfg)?;
    let bg = RenderTarget::background(opts.width, opts.height, opts.background);
    let img = render_view(&plan, &cache, h, &cam, &bg)?;
    Ok((img, plan))
}

/// Runs [`convert`] into a scratch directory and returns per-phase times.
pub fn bench(src: &CloudSource, opts: &ConvertOptions, cancel: &CancelToken) -> Result<PhaseTimings> {
    let report = convert(src, opts, &Silent, cancel)?;
    Ok(report.timings)
}
