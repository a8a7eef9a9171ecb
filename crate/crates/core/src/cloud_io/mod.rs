//! PLY and LAS ingestion.
//!
//! [`open_cloud`] parses the header and returns a [`CloudSource`], an
//! immutable handle that can be read from many threads at once. Binary
//! formats are read with positioned reads on one shared descriptor; ASCII PLY
//! opens a fresh handle per call and seeks via a sparse line index.

pub(crate) mod las;
mod ply;
mod record;
mod write;

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::Serialize;

pub use record::{decode_records, encode_records, PointRecord, Quantization, RECORD_SIZE};
pub use write::{LasWriter, PlyWriter};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, DEFAULT_SCALE};

/// Records decoded per positioned read.
const READ_BATCH: u64 = 65_536;
/// Vertex lines between checkpoints of the ASCII line index.
const ASCII_CHECKPOINT: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CloudFormat {
    PlyAscii,
    PlyBinaryLe,
    Las,
    /// Compressed LAS, only readable through a registered [`LazDecoder`].
    Laz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    pub fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    #[inline]
    fn read_le(self, b: &[u8], o: usize) -> f64 {
        match self {
            Scalar::I8 => b[o] as i8 as f64,
            Scalar::U8 => b[o] as f64,
            Scalar::I16 => i16::from_le_bytes([b[o], b[o + 1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[o], b[o + 1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[o..o + 4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[o..o + 4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[o..o + 4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[o..o + 8].try_into().unwrap()),
        }
    }

    /// Converts a source color channel to 8 bits. 16-bit channels are
    /// divided by 257, floats are taken as `[0, 1]`.
    #[inline]
    fn color_u8(self, v: f64) -> u8 {
        match self {
            Scalar::U16 => (v as u32 / 257).min(255) as u8,
            Scalar::F32 | Scalar::F64 => (v * 255.0).round().clamp(0.0, 255.0) as u8,
            _ => v.clamp(0.0, 255.0) as u8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Attribute {
    X,
    Y,
    Z,
    Red,
    Green,
    Blue,
}

/// Where a canonical attribute lives in a source record.
///
/// For binary layouts `offset` is a byte offset within the record; for ASCII
/// PLY it is the column index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeBinding {
    pub source: String,
    pub attribute: Attribute,
    pub offset: usize,
    pub scalar: Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudHeader {
    pub format: CloudFormat,
    pub point_count: u64,
    /// Header bounds; `None` for PLY, which carries none.
    pub bounds: Option<Aabb>,
    pub scale: [f64; 3],
    /// `None` when the offset is the cloud minimum, resolved by a bounds pass.
    pub offset: Option<[f64; 3]>,
    /// Bytes per record (binary) or columns per line (ASCII PLY).
    pub point_stride: usize,
    pub data_start: u64,
}

/// Decodes compressed LAS point data.
///
/// The public header of a LAZ file is plain LAS, so it is parsed here; a
/// decoder only has to produce records in the header's integer units.
pub trait LazDecoder: Send + Sync {
    fn read_range(
        &self,
        path: &Path,
        header: &CloudHeader,
        first: u64,
        count: u64,
        out: &mut Vec<PointRecord>,
    ) -> Result<()>;
}

#[derive(Debug, Clone, Copy)]
struct Field {
    offset: usize,
    scalar: Scalar,
}

#[derive(Debug, Clone)]
struct RecordLayout {
    pos: [Field; 3],
    color: Option<[Field; 3]>,
    fast: Option<FastLayout>,
}

/// Monomorphic decoding for the common binary layouts.
#[derive(Debug, Clone, Copy)]
struct FastLayout {
    pos: [usize; 3],
    pos_i32: bool,
    color: Option<[usize; 3]>,
    color_u16: bool,
}

impl FastLayout {
    fn detect(pos: &[Field; 3], color: &Option<[Field; 3]>) -> Option<Self> {
        let pos_i32 = match pos.map(|f| f.scalar) {
            [Scalar::F32, Scalar::F32, Scalar::F32] => false,
            [Scalar::I32, Scalar::I32, Scalar::I32] => true,
            _ => return None,
        };
        let color_u16 = match color.map(|c| c.map(|f| f.scalar)) {
            None | Some([Scalar::U8, Scalar::U8, Scalar::U8]) => false,
            Some([Scalar::U16, Scalar::U16, Scalar::U16]) => true,
            _ => return None,
        };
        Some(Self {
            pos: pos.map(|f| f.offset),
            pos_i32,
            color: color.map(|c| c.map(|f| f.offset)),
            color_u16,
        })
    }

    #[inline(always)]
    fn each<const I32: bool, const U16: bool>(&self, buf: &[u8], stride: usize, f: &mut impl FnMut([f64; 3], [u8; 3])) {
        for rec in buf.chunks_exact(stride) {
            let word = |o: usize| [rec[o], rec[o + 1], rec[o + 2], rec[o + 3]];
            let p = self.pos.map(|o| {
                if I32 {
                    i32::from_le_bytes(word(o)) as f64
                } else {
                    f32::from_le_bytes(word(o)) as f64
                }
            });
            let c = match self.color {
                Some(c) if U16 => c.map(|o| (u16::from_le_bytes([rec[o], rec[o + 1]]) / 257) as u8),
                Some(c) => c.map(|o| rec[o]),
                None => [255; 3],
            };
            f(p, c);
        }
    }

    fn decode_all(&self, buf: &[u8], stride: usize, f: &mut impl FnMut([f64; 3], [u8; 3])) {
        match (self.pos_i32, self.color_u16) {
            (false, false) => self.each::<false, false>(buf, stride, f),
            (false, true) => self.each::<false, true>(buf, stride, f),
            (true, false) => self.each::<true, false>(buf, stride, f),
            (true, true) => self.each::<true, true>(buf, stride, f),
        }
    }
}

impl RecordLayout {
    fn from_bindings(bindings: &[AttributeBinding]) -> Self {
        let find = |a: Attribute| {
            bindings.iter().find(|b| b.attribute == a).map(|b| Field {
                offset: b.offset,
                scalar: b.scalar,
            })
        };
        let pos = [
            find(Attribute::X).expect("x bound"),
            find(Attribute::Y).expect("y bound"),
            find(Attribute::Z).expect("z bound"),
        ];
        let color = match (find(Attribute::Red), find(Attribute::Green), find(Attribute::Blue)) {
            (Some(r), Some(g), Some(b)) => Some([r, g, b]),
            _ => None,
        };
        let fast = FastLayout::detect(&pos, &color);
        Self { pos, color, fast }
    }

    fn decode_all(&self, buf: &[u8], stride: usize, mut f: impl FnMut([f64; 3], [u8; 3])) {
        match &self.fast {
            Some(fast) => fast.decode_all(buf, stride, &mut f),
            None => {
                for rec in buf.chunks_exact(stride) {
                    let (p, c) = self.decode_binary(rec);
                    f(p, c);
                }
            }
        }
    }

    #[inline]
    fn decode_binary(&self, rec: &[u8]) -> ([f64; 3], [u8; 3]) {
        let p = self.pos.map(|f| f.scalar.read_le(rec, f.offset));
        let c = match &self.color {
            Some(c) => c.map(|f| f.scalar.color_u8(f.scalar.read_le(rec, f.offset))),
            None => [255; 3],
        };
        (p, c)
    }
}

enum Decoder {
    Binary { layout: RecordLayout, integer: bool },
    Ascii { layout: RecordLayout, lines_before: u64 },
    Laz(Arc<dyn LazDecoder>),
}

/// Opens clouds, optionally with a LAZ decoder registered.
#[derive(Default, Clone)]
pub struct CloudOpener {
    laz: Option<Arc<dyn LazDecoder>>,
}

impl CloudOpener {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_laz_decoder(mut self, decoder: Arc<dyn LazDecoder>) -> Self {
        self.laz = Some(decoder);
        self
    }

    pub fn open(&self, path: impl AsRef<Path>) -> Result<CloudSource> {
        let path = path.as_ref();
        let mut file = File::open(path)?;
        let file_len = file.metadata()?.len();
        let mut head = Vec::with_capacity(64 * 1024);
        (&mut file).take(1 << 20).read_to_end(&mut head)?;

        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        let is_ply = ply::sniff(&head);
        let is_las = las::sniff(&head);
        match ext.as_deref() {
            Some("ply") if !is_ply => {
                return Err(Error::UnsupportedFormat("`.ply` file without PLY magic".into()))
            }
            Some("las") | Some("laz") if !is_las => {
                return Err(Error::UnsupportedFormat("LAS file without LASF signature".into()))
            }
            _ => {}
        }

        if is_ply {
            self.open_ply(path, file, file_len, &head)
        } else if is_las {
            self.open_las(path, file, file_len, &head, ext.as_deref() == Some("laz"))
        } else {
            Err(Error::UnsupportedFormat(format!(
                "{} is neither PLY nor LAS",
                path.display()
            )))
        }
    }

    fn open_ply(&self, path: &Path, file: File, file_len: u64, head: &[u8]) -> Result<CloudSource> {
        let h = ply::parse_header(head)?;
        let layout = RecordLayout::from_bindings(&h.bindings);
        let (format, decoder) = match h.encoding {
            ply::PlyEncoding::BinaryLe => {
                let need = h.data_start + h.vertex_count * h.stride as u64;
                if need > file_len {
                    return Err(Error::MalformedHeader(format!(
                        "{} vertices of {} bytes need {need} bytes, file has {file_len}",
                        h.vertex_count, h.stride
                    )));
                }
                (
                    CloudFormat::PlyBinaryLe,
                    Decoder::Binary {
                        layout,
                        integer: false,
                    },
                )
            }
            ply::PlyEncoding::Ascii => (
                CloudFormat::PlyAscii,
                Decoder::Ascii {
                    layout,
                    lines_before: h.lines_before_vertex,
                },
            ),
        };
        Ok(CloudSource::new(
            CloudHeader {
                format,
                point_count: h.vertex_count,
                bounds: None,
                scale: [DEFAULT_SCALE; 3],
                offset: None,
                point_stride: h.stride,
                data_start: h.data_start,
            },
            path,
            h.bindings,
            decoder,
            file,
        ))
    }

    fn open_las(
        &self,
        path: &Path,
        file: File,
        file_len: u64,
        head: &[u8],
        laz_ext: bool,
    ) -> Result<CloudSource> {
        let h = las::parse_header(head)?;
        let compressed = h.compressed || laz_ext;
        let header = CloudHeader {
            format: if compressed { CloudFormat::Laz } else { CloudFormat::Las },
            point_count: h.point_count,
            bounds: Some(h.bounds),
            scale: h.scale,
            offset: Some(h.offset),
            point_stride: h.record_length,
            data_start: h.data_start,
        };
        let decoder = if compressed {
            Decoder::Laz(self.laz.clone().ok_or(Error::LazNotSupported)?)
        } else {
            let need = h.data_start + h.point_count * h.record_length as u64;
            if need > file_len {
                return Err(Error::MalformedHeader(format!(
                    "{} points of {} bytes need {need} bytes, file has {file_len}",
                    h.point_count, h.record_length
                )));
            }
            Decoder::Binary {
                layout: RecordLayout::from_bindings(&h.bindings),
                integer: true,
            }
        };
        Ok(CloudSource::new(header, path, h.bindings, decoder, file))
    }
}

/// Opens a PLY or LAS file without LAZ support.
pub fn open_cloud(path: impl AsRef<Path>) -> Result<CloudSource> {
    CloudOpener::new().open(path)
}

/// Parsed header plus a typed, seekable point stream.
pub struct CloudSource {
    header: CloudHeader,
    path: PathBuf,
    attributes: Vec<AttributeBinding>,
    decoder: Decoder,
    file: File,
    quant_override: Option<Quantization>,
    quant: OnceLock<Quantization>,
    bounds: OnceLock<Aabb>,
    ascii_index: OnceLock<Vec<u64>>,
}

impl std::fmt::Debug for CloudSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CloudSource")
            .field("path", &self.path)
            .field("header", &self.header)
            .finish_non_exhaustive()
    }
}

impl CloudSource {
    fn new(
        header: CloudHeader,
        path: &Path,
        attributes: Vec<AttributeBinding>,
        decoder: Decoder,
        file: File,
    ) -> Self {
        Self {
            header,
            path: path.to_path_buf(),
            attributes,
            decoder,
            file,
            quant_override: None,
            quant: OnceLock::new(),
            bounds: OnceLock::new(),
            ascii_index: OnceLock::new(),
        }
    }

    /// Quantizes float positions against `q` instead of the default
    /// (scale 0.001, offset = cloud minimum). Has no effect on LAS, whose
    /// positions are already integers in header units.
    pub fn with_quantization(mut self, q: Quantization) -> Self {
        if !matches!(self.decoder, Decoder::Binary { integer: true, .. } | Decoder::Laz(_)) {
            self.quant_override = Some(q);
            self.header.scale = q.scale;
            self.header.offset = Some(q.offset);
        }
        self
    }

    pub fn header(&self) -> &CloudHeader {
        &self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn attributes(&self) -> &[AttributeBinding] {
        &self.attributes
    }

    pub fn point_count(&self) -> u64 {
        self.header.point_count
    }

    pub fn has_color(&self) -> bool {
        self.attributes.iter().any(|a| a.attribute == Attribute::Red)
    }

    fn integer_positions(&self) -> bool {
        matches!(self.decoder, Decoder::Binary { integer: true, .. } | Decoder::Laz(_))
    }

    /// Scale and offset used to produce [`PointRecord`] positions. For PLY
    /// without an override this triggers the bounds pass.
    pub fn quantization(&self) -> Result<Quantization> {
        if let Some(q) = self.quant_override {
            return Ok(q);
        }
        if let Some(offset) = self.header.offset {
            return Ok(Quantization::new(self.header.scale, offset));
        }
        if let Some(q) = self.quant.get() {
            return Ok(*q);
        }
        self.compute_bounds()?;
        Ok(*self.quant.get().expect("set by bounds pass"))
    }

    /// Exact bounds of all dequantized positions, computed once by a full
    /// parallel pass and cached.
    pub fn compute_bounds(&self) -> Result<Aabb> {
        if let Some(b) = self.bounds.get() {
            return Ok(*b);
        }
        let raw = self.raw_bounds()?;
        Ok(self.finish_bounds(raw))
    }

    /// Caches the bounds (and for PLY the quantization) derived from the raw
    /// extremes of every record.
    pub(crate) fn finish_bounds(&self, raw: Aabb) -> Aabb {
        if let Some(b) = self.bounds.get() {
            return *b;
        }
        let bounds = if self.integer_positions() {
            let q = Quantization::new(self.header.scale, self.header.offset.unwrap_or([0.0; 3]));
            if raw.is_empty() {
                Aabb::point(q.offset)
            } else {
                Aabb::new(
                    q.dequantize(raw.min.map(|v| v as i32)),
                    q.dequantize(raw.max.map(|v| v as i32)),
                )
            }
        } else {
            let q = self.quant_override.unwrap_or_else(|| {
                let offset = if raw.is_empty() { [0.0; 3] } else { raw.min };
                Quantization::new(self.header.scale, offset)
            });
            let _ = self.quant.set(q);
            if raw.is_empty() {
                Aabb::point(q.offset)
            } else {
                // quantize-then-dequantize is monotone, so the extremes map to extremes
                Aabb::new(q.dequantize(q.quantize(raw.min)), q.dequantize(q.quantize(raw.max)))
            }
        };
        let _ = self.bounds.set(bounds);
        *self.bounds.get().expect("just set")
    }

    /// True until float positions can be quantized, i.e. while the default
    /// offset still awaits a bounds pass.
    pub(crate) fn quantization_pending(&self) -> bool {
        self.quant_override.is_none() && self.header.offset.is_none() && self.quant.get().is_none()
    }

    /// Decodes records `first..first+count` and returns their raw bounds,
    /// appending the raw position and color of each index in `keep` (sorted,
    /// inside the range) to `out`.
    pub(crate) fn scan_keep(
        &self,
        first: u64,
        count: u64,
        keep: &[u64],
        out: &mut Vec<([f64; 3], [u8; 3])>,
    ) -> Result<Aabb> {
        self.check_range(first, count)?;
        let mut b = Aabb::empty();
        let (mut i, mut k) = (first, 0);
        self.decode_raw(first, count, |p, c| {
            b.extend(p);
            if keep.get(k) == Some(&i) {
                out.push((p, c));
                k += 1;
            }
            i += 1;
        })?;
        Ok(b)
    }

    /// Header bounds if the format has them, otherwise [`Self::compute_bounds`].
    pub fn bounds(&self) -> Result<Aabb> {
        match (self.bounds.get(), self.header.bounds) {
            (Some(b), _) => Ok(*b),
            (None, Some(b)) => Ok(b),
            (None, None) => self.compute_bounds(),
        }
    }

    fn raw_bounds(&self) -> Result<Aabb> {
        let n = self.header.point_count;
        let workers = crate::default_workers().max(1) as u64;
        let per = n.div_ceil(workers).max(1);
        let ranges: Vec<(u64, u64)> = (0..n)
            .step_by(per as usize)
            .map(|s| (s, per.min(n - s)))
            .collect();
        let parts: Vec<Result<Aabb>> = std::thread::scope(|scope| {
            let handles: Vec<_> = ranges
                .iter()
                .map(|&(first, count)| {
                    scope.spawn(move || {
                        let mut b = Aabb::empty();
                        self.decode_raw(first, count, |p, _| b.extend(p))?;
                        Ok(b)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("bounds worker")).collect()
        });
        let mut out = Aabb::empty();
        for part in parts {
            let part = part?;
            if !part.is_empty() {
                out = out.union(&part);
            }
        }
        Ok(out)
    }

    fn check_range(&self, first: u64, count: u64) -> Result<()> {
        let end = first.checked_add(count).unwrap_or(u64::MAX);
        if end > self.header.point_count {
            return Err(Error::IndexOutOfRange {
                first,
                end,
                count: self.header.point_count,
            });
        }
        Ok(())
    }

    /// Exactly `count` records starting at `first`, in file order.
    pub fn read_range(&self, first: u64, count: u64) -> Result<Vec<PointRecord>> {
        let mut out = Vec::with_capacity(count.min(1 << 24) as usize);
        self.read_range_into(first, count, &mut out)?;
        Ok(out)
    }

    /// Appends records `first..first+count` to `out`.
    pub fn read_range_into(&self, first: u64, count: u64, out: &mut Vec<PointRecord>) -> Result<()> {
        self.check_range(first, count)?;
        if let Decoder::Laz(dec) = &self.decoder {
            return dec.read_range(&self.path, &self.header, first, count, out);
        }
        let q = self.quantization()?;
        let integer = self.integer_positions();
        self.decode_raw(first, count, |p, c| {
            let pos = if integer { p.map(|v| v as i32) } else { q.quantize(p) };
            out.push(PointRecord::new(pos, c));
        })
    }

    /// Records at the given strictly increasing indices. Reads are grouped
    /// into spans of at most `batch` records; only selected records are decoded.
    pub fn read_indices(&self, indices: &[u64], batch: u64) -> Result<Vec<PointRecord>> {
        let mut out = Vec::with_capacity(indices.len());
        self.read_indices_into(indices, batch, &mut out)?;
        Ok(out)
    }

    pub fn read_indices_into(
        &self,
        indices: &[u64],
        batch: u64,
        out: &mut Vec<PointRecord>,
    ) -> Result<()> {
        let (Some(&first), Some(&last)) = (indices.first(), indices.last()) else {
            return Ok(());
        };
        self.check_range(first, last - first + 1)?;
        let batch = batch.max(1);
        let q = self.quantization()?;
        let mut buf = Vec::new();
        let mut tmp = Vec::new();
        let mut i = 0;
        while i < indices.len() {
            let span_first = indices[i];
            let limit = span_first + batch;
            let mut j = i;
            while j < indices.len() && indices[j] < limit {
                j += 1;
            }
            let span_last = indices[j - 1];
            let group = &indices[i..j];
            match &self.decoder {
                Decoder::Binary { layout, integer } => {
                    let stride = self.header.point_stride;
                    let len = (span_last - span_first + 1) as usize * stride;
                    buf.resize(len, 0);
                    self.file.read_exact_at(
                        &mut buf,
                        self.header.data_start + span_first * stride as u64,
                    )?;
                    for &idx in group {
                        let o = (idx - span_first) as usize * stride;
                        let (p, c) = layout.decode_binary(&buf[o..o + stride]);
                        let pos = if *integer { p.map(|v| v as i32) } else { q.quantize(p) };
                        out.push(PointRecord::new(pos, c));
                    }
                }
                _ => {
                    tmp.clear();
                    self.read_range_into(span_first, span_last - span_first + 1, &mut tmp)?;
                    out.extend(group.iter().map(|&idx| tmp[(idx - span_first) as usize]));
                }
            }
            i = j;
        }
        Ok(())
    }

    /// Calls `f` with the raw source position (floats for PLY, integer units
    /// for LAS) and 8-bit color of each record in the range.
    fn decode_raw(
        &self,
        first: u64,
        count: u64,
        mut f: impl FnMut([f64; 3], [u8; 3]),
    ) -> Result<()> {
        if count == 0 {
            return Ok(());
        }
        match &self.decoder {
            Decoder::Binary { layout, .. } => {
                let stride = self.header.point_stride;
                let mut buf = Vec::new();
                let mut done = 0;
                while done < count {
                    let n = READ_BATCH.min(count - done);
                    buf.resize(n as usize * stride, 0);
                    let at = self.header.data_start + (first + done) * stride as u64;
                    self.file.read_exact_at(&mut buf, at)?;
                    layout.decode_all(&buf, stride, &mut f);
                    done += n;
                }
                Ok(())
            }
            Decoder::Ascii { layout, lines_before } => {
                self.decode_ascii(layout, *lines_before, first, count, f)
            }
            Decoder::Laz(dec) => {
                let mut recs = Vec::new();
                let mut done = 0;
                while done < count {
                    let n = READ_BATCH.min(count - done);
                    recs.clear();
                    dec.read_range(&self.path, &self.header, first + done, n, &mut recs)?;
                    if recs.len() as u64 != n {
                        return Err(Error::MalformedData(format!(
                            "LAZ decoder returned {} of {n} records",
                            recs.len()
                        )));
                    }
                    for r in &recs {
                        f(r.position().map(|v| v as f64), r.rgb());
                    }
                    done += n;
                }
                Ok(())
            }
        }
    }

    fn ascii_checkpoints(&self, lines_before: u64) -> Result<&[u64]> {
        if let Some(idx) = self.ascii_index.get() {
            return Ok(idx);
        }
        let mut reader = BufReader::with_capacity(1 << 20, File::open(&self.path)?);
        reader.seek(SeekFrom::Start(self.header.data_start))?;
        let mut pos = self.header.data_start;
        let mut line = Vec::new();
        for _ in 0..lines_before {
            line.clear();
            let n = reader.read_until(b'\n', &mut line)?;
            if n == 0 {
                return Err(Error::MalformedHeader("file ends before vertex data".into()));
            }
            pos += n as u64;
        }
        let mut checkpoints = Vec::new();
        for i in 0..self.header.point_count {
            if i % ASCII_CHECKPOINT == 0 {
                checkpoints.push(pos);
            }
            line.clear();
            let n = reader.read_until(b'\n', &mut line)?;
            if n == 0 {
                return Err(Error::MalformedHeader(format!(
                    "header declares {} vertices, file holds {i}",
                    self.header.point_count
                )));
            }
            pos += n as u64;
        }
        let _ = self.ascii_index.set(checkpoints);
        Ok(self.ascii_index.get().expect("just set"))
    }

    fn decode_ascii(
        &self,
        layout: &RecordLayout,
        lines_before: u64,
        first: u64,
        count: u64,
        mut f: impl FnMut([f64; 3], [u8; 3]),
    ) -> Result<()> {
        let checkpoints = self.ascii_checkpoints(lines_before)?;
        let cp = (first / ASCII_CHECKPOINT) as usize;
        let mut reader = BufReader::with_capacity(1 << 16, File::open(&self.path)?);
        reader.seek(SeekFrom::Start(checkpoints[cp]))?;
        let mut line = String::new();
        for _ in (cp as u64 * ASCII_CHECKPOINT)..first {
            line.clear();
            reader.read_line(&mut line)?;
        }
        let columns = self.header.point_stride;
        let mut values = vec![0f64; columns];
        for i in 0..count {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Err(Error::MalformedData(format!("missing vertex line {}", first + i)));
            }
            let mut n = 0;
            for tok in line.split_ascii_whitespace().take(columns) {
                values[n] = tok.parse().map_err(|_| {
                    Error::MalformedData(format!("bad value {tok:?} on vertex {}", first + i))
                })?;
                n += 1;
            }
            if n < columns {
                return Err(Error::MalformedData(format!(
                    "vertex {} has {n} of {columns} columns",
                    first + i
                )));
            }
            // a value declared `float` means what its f32 rounding means in binary files
            let p = layout.pos.map(|fl| match fl.scalar {
                Scalar::F32 => values[fl.offset] as f32 as f64,
                _ => values[fl.offset],
            });
            let c = match &layout.color {
                Some(c) => c.map(|fl| fl.scalar.color_u8(values[fl.offset])),
                None => [255; 3],
            };
            f(p, c);
        }
        Ok(())
    }
}
