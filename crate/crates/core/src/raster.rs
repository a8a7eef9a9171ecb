//! Software point rasterizer with 64-bit depth+color packing.
//!
//! Each framebuffer cell holds `(depth_key << 32) | rgba`, so keeping the
//! unsigned minimum performs the depth test and the color write in one
//! step. Cells are updated with a compare-and-swap loop, so any number of
//! writers may share a framebuffer and the result is the minimum candidate
//! per pixel regardless of interleaving.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use glam::DVec3;
use rayon::prelude::*;

use crate::cloud_io::{PointRecord, Quantization};
use crate::error::{Error, Result};
use crate::octree::OctreeHierarchy;
use crate::traverse::{CameraState, NodeCache, TraversalPlan, ViewBasis};

pub const EMPTY: u64 = u64::MAX;

/// Order-preserving key of a nonnegative finite depth: its bit pattern.
#[inline]
pub fn depth_key(depth: f32) -> u32 {
    debug_assert!(depth >= 0.0 && depth.is_finite());
    depth.to_bits()
}

#[inline]
pub fn pack(depth: f32, rgb: [u8; 3]) -> u64 {
    ((depth_key(depth) as u64) << 32) | u32::from_le_bytes([rgb[0], rgb[1], rgb[2], 255]) as u64
}

/// Depth and color of a cell, or `None` for an empty cell.
#[inline]
pub fn unpack(v: u64) -> Option<(f32, [u8; 3])> {
    if v == EMPTY {
        return None;
    }
    let c = (v as u32).to_le_bytes();
    Some((f32::from_bits((v >> 32) as u32), [c[0], c[1], c[2]]))
}

pub struct Framebuffer64 {
    width: u32,
    height: u32,
    cells: Vec<AtomicU64>,
}

impl Framebuffer64 {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            cells: (0..width as usize * height as usize).map(|_| AtomicU64::new(EMPTY)).collect(),
        }
    }

    pub fn for_camera(cam: &CameraState) -> Self {
        Self::new(cam.screen_width_pixels(), cam.screen_height_pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> u64 {
        self.cells[(y * self.width + x) as usize].load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> Vec<u64> {
        self.cells.iter().map(|c| c.load(Ordering::Relaxed)).collect()
    }

    pub fn clear(&self) {
        self.cells.iter().for_each(|c| c.store(EMPTY, Ordering::Relaxed));
    }

    /// Lowers the cell at `idx` to `v` if smaller; returns whether it wrote.
    #[inline]
    fn update_min(&self, idx: usize, v: u64) -> bool {
        let cell = &self.cells[idx];
        let mut cur = cell.load(Ordering::Relaxed);
        while v < cur {
            match cell.compare_exchange_weak(cur, v, Ordering::Relaxed, Ordering::Relaxed) {
                Ok(_) => return true,
                Err(now) => cur = now,
            }
        }
        false
    }
}

/// Counters of one rasterization call: `written + early_rejected + clipped
/// == tested`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RasterStats {
    pub tested: u64,
    pub written: u64,
    pub early_rejected: u64,
    pub clipped: u64,
}

impl std::ops::Add for RasterStats {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            tested: self.tested + o.tested,
            written: self.written + o.written,
            early_rejected: self.early_rejected + o.early_rejected,
            clipped: self.clipped + o.clipped,
        }
    }
}

/// Pixel and view depth of `p`, or `None` if it falls outside the view
/// volume or the pixel grid. Pixel `(x, y)` covers the half-open NDC range
/// starting at its top-left corner.
#[inline]
pub fn pixel_of(cam: &CameraState, basis: &ViewBasis, width: u32, height: u32, p: DVec3) -> Option<(u32, u32, f32)> {
    let (nx, ny, depth) = cam.project(basis, p)?;
    let px = ((nx + 1.0) * 0.5 * width as f64).floor();
    let py = ((1.0 - ny) * 0.5 * height as f64).floor();
    if px < 0.0 || py < 0.0 || px >= width as f64 || py >= height as f64 {
        return None;
    }
    Some((px as u32, py as u32, depth as f32))
}

/// Rasterizes `points` into `fb`. Safe to call concurrently on one
/// framebuffer from several threads.
pub fn rasterize_points(points: &[PointRecord], q: &Quantization, cam: &CameraState, fb: &Framebuffer64) -> Result<RasterStats> {
    let basis = cam.basis()?;
    let (w, h) = (fb.width, fb.height);
    let mut s = RasterStats::default();
    for r in points {
        s.tested += 1;
        let p = DVec3::from_array(q.dequantize_record(r));
        let Some((x, y, depth)) = pixel_of(cam, &basis, w, h, p) else {
            s.clipped += 1;
            continue;
        };
        if fb.update_min((y * w + x) as usize, pack(depth, r.rgb())) {
            s.written += 1;
        } else {
            s.early_rejected += 1;
        }
    }
    Ok(s)
}

/// Splits `points` into `writers` contiguous slices rasterized on separate
/// threads into the same framebuffer.
pub fn rasterize_concurrent(
    points: &[PointRecord],
    q: &Quantization,
    cam: &CameraState,
    fb: &Framebuffer64,
    writers: usize,
) -> Result<RasterStats> {
    let per = points.len().div_ceil(writers.max(1)).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = points
            .chunks(per)
            .map(|chunk| scope.spawn(move || rasterize_points(chunk, q, cam, fb)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("raster writer panicked"))
            .try_fold(RasterStats::default(), |acc, s| Ok(acc + s?))
    })
}

/// Color and depth image.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderTarget {
    pub width: u32,
    pub height: u32,
    pub color: Vec<[u8; 3]>,
    pub depth: Vec<f32>,
}

impl RenderTarget {
    /// Uniform color at infinite depth.
    pub fn background(width: u32, height: u32, color: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            color: vec![color; n],
            depth: vec![f32::INFINITY; n],
        }
    }

    /// Binary PPM (P6) bytes, rows top to bottom.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.color.len() * 3);
        for c in &self.color {
            out.extend_from_slice(c);
        }
        out
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_ppm())?;
        f.sync_all()?;
        Ok(())
    }
}

/// Composites `fb` over `background`, keeping the nearer of the two per
/// pixel. Equal depths favor the point.
pub fn resolve(fb: &Framebuffer64, background: &RenderTarget) -> Result<RenderTarget> {
    if fb.width != background.width || fb.height != background.height {
        return Err(Error::DimensionMismatch {
            fb: (fb.width, fb.height),
            background: (background.width, background.height),
        });
    }
    let mut out = background.clone();
    for (i, cell) in fb.cells.iter().enumerate() {
        if let Some((d, rgb)) = unpack(cell.load(Ordering::Relaxed)) {
            if d <= out.depth[i] {
                out.depth[i] = d;
                out.color[i] = rgb;
            }
        }
    }
    Ok(out)
}

/// Renders the plan's render set from `cache` over `background`.
pub fn render_view(
    plan: &TraversalPlan,
    cache: &NodeCache,
    h: &OctreeHierarchy,
    cam: &CameraState,
    background: &RenderTarget,
) -> Result<RenderTarget> {
    let payloads = plan
        .render_set
        .iter()
        .map(|n| cache.payload(n).ok_or_else(|| Error::NodeNotResident(n.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let fb = Framebuffer64::new(background.width, background.height);
    let q = h.quantization;
    payloads
        .par_iter()
        .flat_map(|p| p.points.par_chunks(1 << 16))
        .try_for_each(|chunk| rasterize_points(chunk, &q, cam, &fb).map(|_| ()))?;
    resolve(&fb, background)
}
