use std::fs::File;
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::Path;

use super::{las, PointRecord, Quantization, Scalar};
use crate::error::{Error, Result};
use crate::geometry::Aabb;

/// Streaming PLY writer with `x y z` positions and `red green blue` uchar
/// colors. The vertex count is declared up front and checked on finish.
pub struct PlyWriter {
    out: BufWriter<File>,
    ascii: bool,
    position: Scalar,
    declared: u64,
    written: u64,
}

impl PlyWriter {
    /// `position` must be `F32` or `F64`.
    pub fn create(path: impl AsRef<Path>, count: u64, ascii: bool, position: Scalar) -> Result<Self> {
        let ty = match position {
            Scalar::F32 => "float",
            Scalar::F64 => "double",
            other => {
                return Err(Error::InvalidConfig(format!(
                    "PLY positions must be float or double, got {other:?}"
                )))
            }
        };
        let mut out = BufWriter::with_capacity(1 << 20, File::create(path)?);
        let format = if ascii { "ascii" } else { "binary_little_endian" };
        write!(
            out,
            "ply\nformat {format} 1.0\ncomment fastpoints\nelement vertex {count}\n\
             property {ty} x\nproperty {ty} y\nproperty {ty} z\n\
             property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
        )?;
        Ok(Self {
            out,
            ascii,
            position,
            declared: count,
            written: 0,
        })
    }

    pub fn write_point(&mut self, p: [f64; 3], rgb: [u8; 3]) -> Result<()> {
        if self.ascii {
            match self.position {
                Scalar::F32 => {
                    let [x, y, z] = p.map(|v| v as f32);
                    writeln!(self.out, "{x} {y} {z} {} {} {}", rgb[0], rgb[1], rgb[2])?
                }
                _ => writeln!(self.out, "{} {} {} {} {} {}", p[0], p[1], p[2], rgb[0], rgb[1], rgb[2])?,
            }
        } else {
            for v in p {
                match self.position {
                    Scalar::F32 => self.out.write_all(&(v as f32).to_le_bytes())?,
                    _ => self.out.write_all(&v.to_le_bytes())?,
                }
            }
            self.out.write_all(&rgb)?;
        }
        self.written += 1;
        Ok(())
    }

    /// Writes dequantized records as double positions.
    pub fn write_records(&mut self, records: &[PointRecord], q: &Quantization) -> Result<()> {
        for r in records {
            self.write_point(q.dequantize_record(r), r.rgb())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.declared {
            return Err(Error::InvalidConfig(format!(
                "declared {} vertices, wrote {}",
                self.declared, self.written
            )));
        }
        self.out.flush()?;
        Ok(())
    }
}

/// Streaming LAS writer for point formats 0-3. Header count and bounds are
/// patched in on [`LasWriter::finish`].
pub struct LasWriter {
    out: BufWriter<File>,
    version_minor: u8,
    point_format: u8,
    quant: Quantization,
    raw_bounds: Aabb,
    written: u64,
    record: Vec<u8>,
}

impl LasWriter {
    pub fn create(
        path: impl AsRef<Path>,
        version_minor: u8,
        point_format: u8,
        quant: Quantization,
    ) -> Result<Self> {
        let len = las::record_length(point_format).ok_or_else(|| {
            Error::UnsupportedFormat(format!("LAS point data format {point_format}"))
        })?;
        if !(2..=4).contains(&version_minor) {
            return Err(Error::UnsupportedFormat(format!("LAS 1.{version_minor}")));
        }
        let mut out = BufWriter::with_capacity(1 << 20, File::create(path)?);
        out.write_all(&las::write_header(
            version_minor,
            point_format,
            0,
            quant.scale,
            quant.offset,
            &Aabb::point([0.0; 3]),
        ))?;
        Ok(Self {
            out,
            version_minor,
            point_format,
            quant,
            raw_bounds: Aabb::empty(),
            written: 0,
            record: vec![0; len],
        })
    }

    /// Writes one point in header integer units with 16-bit color.
    pub fn write_raw(&mut self, pos: [i32; 3], rgb16: [u16; 3]) -> Result<()> {
        self.record.fill(0);
        for (i, v) in pos.iter().enumerate() {
            self.record[4 * i..4 * i + 4].copy_from_slice(&v.to_le_bytes());
        }
        if let Some(o) = las::rgb_offset(self.point_format) {
            for (i, c) in rgb16.iter().enumerate() {
                self.record[o + 2 * i..o + 2 * i + 2].copy_from_slice(&c.to_le_bytes());
            }
        }
        self.out.write_all(&self.record)?;
        self.raw_bounds.extend(pos.map(|v| v as f64));
        self.written += 1;
        Ok(())
    }

    /// Writes a record, expanding its 8-bit color to 16 bits.
    pub fn write_record(&mut self, r: &PointRecord) -> Result<()> {
        self.write_raw(r.position(), r.rgb().map(|c| c as u16 * 257))
    }

    pub fn finish(mut self) -> Result<()> {
        let bounds = if self.raw_bounds.is_empty() {
            Aabb::point([0.0; 3])
        } else {
            Aabb::new(
                self.quant.dequantize(self.raw_bounds.min.map(|v| v as i32)),
                self.quant.dequantize(self.raw_bounds.max.map(|v| v as i32)),
            )
        };
        let header = las::write_header(
            self.version_minor,
            self.point_format,
            self.written,
            self.quant.scale,
            self.quant.offset,
            &bounds,
        );
        self.out.flush()?;
        let mut file = self.out.into_inner().map_err(|e| e.into_error())?;
        file.seek(SeekFrom::Start(0))?;
        file.write_all(&header)?;
        file.flush()?;
        Ok(())
    }
}
