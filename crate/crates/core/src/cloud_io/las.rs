//! LAS 1.2-1.4 public header block and point formats 0-3.

use super::{Attribute, AttributeBinding, Scalar};
use crate::error::{Error, Result};
use crate::geometry::Aabb;

/// Bytes needed to read every field used here (through the 1.4 point count).
pub(crate) const HEADER_PROBE: usize = 375;
const HEADER_12_SIZE: usize = 227;

#[derive(Debug, Clone)]
pub(crate) struct LasHeader {
    pub compressed: bool,
    pub record_length: usize,
    pub point_count: u64,
    pub data_start: u64,
    pub scale: [f64; 3],
    pub offset: [f64; 3],
    pub bounds: Aabb,
    pub bindings: Vec<AttributeBinding>,
}

fn u16_at(b: &[u8], o: usize) -> u16 {
    u16::from_le_bytes([b[o], b[o + 1]])
}

fn u32_at(b: &[u8], o: usize) -> u32 {
    u32::from_le_bytes(b[o..o + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], o: usize) -> u64 {
    u64::from_le_bytes(b[o..o + 8].try_into().unwrap())
}

fn f64_at(b: &[u8], o: usize) -> f64 {
    f64::from_le_bytes(b[o..o + 8].try_into().unwrap())
}

pub(crate) fn sniff(bytes: &[u8]) -> bool {
    bytes.starts_with(b"LASF")
}

/// Minimum record size per point data format, and the byte offset of RGB.
fn format_layout(format: u8) -> Option<(usize, Option<usize>)> {
    match format {
        0 => Some((20, None)),
        1 => Some((28, None)),
        2 => Some((26, Some(20))),
        3 => Some((34, Some(28))),
        _ => None,
    }
}

/// Parses the public header block. `bytes` holds the first bytes of the file.
pub(crate) fn parse_header(bytes: &[u8]) -> Result<LasHeader> {
    if !sniff(bytes) {
        return Err(Error::UnsupportedFormat("missing LASF signature".into()));
    }
    if bytes.len() < HEADER_12_SIZE {
        return Err(Error::MalformedHeader("LAS header truncated".into()));
    }
    let version = (bytes[24], bytes[25]);
    if version.0 != 1 || !(2..=4).contains(&version.1) {
        return Err(Error::UnsupportedFormat(format!(
            "LAS version {}.{} (supported: 1.2-1.4)",
            version.0, version.1
        )));
    }
    let header_size = u16_at(bytes, 94) as usize;
    let data_start = u32_at(bytes, 96) as u64;
    let raw_format = bytes[104];
    // LAZ marks compression in the two high bits of the format byte
    let compressed = raw_format & 0xC0 != 0;
    let point_format = raw_format & 0x3F;
    let record_length = u16_at(bytes, 105) as usize;
    let legacy_count = u32_at(bytes, 107) as u64;

    let (min_len, rgb) = format_layout(point_format).ok_or_else(|| {
        Error::UnsupportedFormat(format!("LAS point data format {point_format}"))
    })?;
    if header_size < HEADER_12_SIZE || data_start < header_size as u64 {
        return Err(Error::MalformedHeader(format!(
            "header size {header_size}, point data offset {data_start}"
        )));
    }
    if record_length < min_len {
        return Err(Error::MalformedHeader(format!(
            "record length {record_length} below minimum {min_len} for format {point_format}"
        )));
    }

    let point_count = if version.1 >= 4 {
        if bytes.len() < HEADER_PROBE || header_size < HEADER_PROBE {
            return Err(Error::MalformedHeader("LAS 1.4 header truncated".into()));
        }
        let extended = u64_at(bytes, 247);
        if extended != 0 {
            if legacy_count != 0 && legacy_count != extended {
                return Err(Error::MalformedHeader(format!(
                    "legacy point count {legacy_count} disagrees with {extended}"
                )));
            }
            extended
        } else {
            legacy_count
        }
    } else {
        legacy_count
    };

    let scale = [f64_at(bytes, 131), f64_at(bytes, 139), f64_at(bytes, 147)];
    let offset = [f64_at(bytes, 155), f64_at(bytes, 163), f64_at(bytes, 171)];
    if scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::MalformedHeader(format!("non-positive scale {scale:?}")));
    }
    let bounds = Aabb::new(
        [f64_at(bytes, 187), f64_at(bytes, 203), f64_at(bytes, 219)],
        [f64_at(bytes, 179), f64_at(bytes, 195), f64_at(bytes, 211)],
    );
    if point_count > 0 && bounds.is_empty() {
        return Err(Error::MalformedHeader(format!("inverted bounds {bounds:?}")));
    }

    let mut bindings = vec![
        binding("X", Attribute::X, 0, Scalar::I32),
        binding("Y", Attribute::Y, 4, Scalar::I32),
        binding("Z", Attribute::Z, 8, Scalar::I32),
    ];
    if let Some(o) = rgb {
        bindings.push(binding("Red", Attribute::Red, o, Scalar::U16));
        bindings.push(binding("Green", Attribute::Green, o + 2, Scalar::U16));
        bindings.push(binding("Blue", Attribute::Blue, o + 4, Scalar::U16));
    }

    Ok(LasHeader {
        compressed,
        record_length,
        point_count,
        data_start,
        scale,
        offset,
        bounds: if point_count == 0 && bounds.is_empty() {
            Aabb::point([0.0; 3])
        } else {
            bounds
        },
        bindings,
    })
}

fn binding(name: &str, attribute: Attribute, offset: usize, scalar: Scalar) -> AttributeBinding {
    AttributeBinding {
        source: name.to_string(),
        attribute,
        offset,
        scalar,
    }
}

/// Serializes a minimal LAS public header (no VLRs).
pub(crate) fn write_header(
    version_minor: u8,
    point_format: u8,
    point_count: u64,
    scale: [f64; 3],
    offset: [f64; 3],
    bounds: &Aabb,
) -> Vec<u8> {
    let header_size = if version_minor >= 4 { HEADER_PROBE } else { HEADER_12_SIZE };
    let record_length = format_layout(point_format).expect("supported format").0;
    let mut h = vec![0u8; header_size];
    h[0..4].copy_from_slice(b"LASF");
    h[24] = 1;
    h[25] = version_minor;
    h[26..26 + 9].copy_from_slice(b"fastpoint");
    h[94..96].copy_from_slice(&(header_size as u16).to_le_bytes());
    h[96..100].copy_from_slice(&(header_size as u32).to_le_bytes());
    h[104] = point_format;
    h[105..107].copy_from_slice(&(record_length as u16).to_le_bytes());
    let legacy = if point_count <= u32::MAX as u64 { point_count as u32 } else { 0 };
    h[107..111].copy_from_slice(&legacy.to_le_bytes());
    for i in 0..3 {
        h[131 + 8 * i..139 + 8 * i].copy_from_slice(&scale[i].to_le_bytes());
        h[155 + 8 * i..163 + 8 * i].copy_from_slice(&offset[i].to_le_bytes());
    }
    for (i, base) in [179usize, 195, 211].into_iter().enumerate() {
        h[base..base + 8].copy_from_slice(&bounds.max[i].to_le_bytes());
        h[base + 8..base + 16].copy_from_slice(&bounds.min[i].to_le_bytes());
    }
    if version_minor >= 4 {
        h[247..255].copy_from_slice(&point_count.to_le_bytes());
    }
    h
}

pub(crate) fn record_length(point_format: u8) -> Option<usize> {
    format_layout(point_format).map(|(len, _)| len)
}

pub(crate) fn rgb_offset(point_format: u8) -> Option<usize> {
    format_layout(point_format).and_then(|(_, rgb)| rgb)
}
