use serde::{Deserialize, Serialize};

/// Serialized size of a [`PointRecord`].
pub const RECORD_SIZE: usize = 16;

/// One point: quantized position plus 8-bit color.
///
/// Serialized as `px, py, pz` (i32 LE), `r, g, b`, then a zero pad byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PointRecord {
    pub px: i32,
    pub py: i32,
    pub pz: i32,
    pub r: u8,
    pub g: u8,
    pub b: u8,
    pub pad: u8,
}

impl PointRecord {
    pub fn new(pos: [i32; 3], rgb: [u8; 3]) -> Self {
        Self {
            px: pos[0],
            py: pos[1],
            pz: pos[2],
            r: rgb[0],
            g: rgb[1],
            b: rgb[2],
            pad: 0,
        }
    }

    pub fn position(&self) -> [i32; 3] {
        [self.px, self.py, self.pz]
    }

    pub fn rgb(&self) -> [u8; 3] {
        [self.r, self.g, self.b]
    }

    pub fn to_bytes(&self) -> [u8; RECORD_SIZE] {
        let mut out = [0u8; RECORD_SIZE];
        out[0..4].copy_from_slice(&self.px.to_le_bytes());
        out[4..8].copy_from_slice(&self.py.to_le_bytes());
        out[8..12].copy_from_slice(&self.pz.to_le_bytes());
        out[12] = self.r;
        out[13] = self.g;
        out[14] = self.b;
        out[15] = self.pad;
        out
    }

    pub fn from_bytes(b: &[u8]) -> Self {
        let i = |o: usize| i32::from_le_bytes([b[o], b[o + 1], b[o + 2], b[o + 3]]);
        Self {
            px: i(0),
            py: i(4),
            pz: i(8),
            r: b[12],
            g: b[13],
            b: b[14],
            pad: b[15],
        }
    }
}

/// Appends the serialized form of every record to `out`.
pub fn encode_records(records: &[PointRecord], out: &mut Vec<u8>) {
    out.reserve(records.len() * RECORD_SIZE);
    for r in records {
        out.extend_from_slice(&r.to_bytes());
    }
}

/// Decodes a buffer of whole 16-byte records; a trailing partial record is ignored.
pub fn decode_records(bytes: &[u8]) -> Vec<PointRecord> {
    bytes
        .chunks_exact(RECORD_SIZE)
        .map(PointRecord::from_bytes)
        .collect()
}

/// Maps integer positions to world coordinates: `offset + p * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantization {
    pub scale: [f64; 3],
    pub offset: [f64; 3],
}

impl Quantization {
    pub fn new(scale: [f64; 3], offset: [f64; 3]) -> Self {
        Self { scale, offset }
    }

    pub fn dequantize(&self, p: [i32; 3]) -> [f64; 3] {
        [
            self.offset[0] + p[0] as f64 * self.scale[0],
            self.offset[1] + p[1] as f64 * self.scale[1],
            self.offset[2] + p[2] as f64 * self.scale[2],
        ]
    }

    pub fn dequantize_record(&self, r: &PointRecord) -> [f64; 3] {
        self.dequantize(r.position())
    }

    /// Nearest quantized position; out-of-range values saturate.
    pub fn quantize(&self, p: [f64; 3]) -> [i32; 3] {
        [
            ((p[0] - self.offset[0]) / self.scale[0]).round() as i32,
            ((p[1] - self.offset[1]) / self.scale[1]).round() as i32,
            ((p[2] - self.offset[2]) / self.scale[2]).round() as i32,
        ]
    }

    pub fn max_step(&self) -> f64 {
        self.scale.iter().cloned().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn record_bytes_roundtrip(px in any::<i32>(), py in any::<i32>(), pz in any::<i32>(), rgb in any::<[u8; 3]>()) {
            let r = PointRecord::new([px, py, pz], rgb);
            let b = r.to_bytes();
            prop_assert_eq!(b.len(), RECORD_SIZE);
            prop_assert_eq!(b[15], 0);
            prop_assert_eq!(PointRecord::from_bytes(&b), r);
        }
    }

    #[test]
    fn quantize_ascii_example() {
        let q = Quantization::new([0.001; 3], [0.0; 3]);
        assert_eq!(q.quantize([1.5, 2.5, 3.5]), [1500, 2500, 3500]);
    }

    #[test]
    fn las_style_dequantization() {
        let q = Quantization::new([0.01; 3], [0.0; 3]);
        assert_eq!(q.dequantize([1000, 2000, 3000]), [10.0, 20.0, 30.0]);
    }
}
