//! Deterministic synthetic clouds for examples, tests and benchmarks.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud_io::{LasWriter, PlyWriter, Quantization, Scalar};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    /// Uniform in `[0, 100)^3`.
    Uniform,
    /// Four Gaussian blobs (sigma 4) inside the `[0, 50)^3` octant of the
    /// uniform cube.
    Clustered,
    /// Uniform over the square `[0, 100)^2` at `z = 10`.
    Planar,
}

#[derive(Debug, Clone, Copy)]
pub struct SyntheticCloud {
    pub distribution: Distribution,
    pub count: u64,
    pub seed: u64,
}

const BLOBS: [[f64; 3]; 4] = [
    [12.0, 15.0, 20.0],
    [35.0, 10.0, 30.0],
    [25.0, 38.0, 12.0],
    [40.0, 40.0, 40.0],
];

impl SyntheticCloud {
    pub fn new(distribution: Distribution, count: u64, seed: u64) -> Self {
        Self {
            distribution,
            count,
            seed,
        }
    }

    /// Positions (in meters) and colors, in file order.
    pub fn points(&self) -> impl Iterator<Item = ([f64; 3], [u8; 3])> + '_ {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let dist = self.distribution;
        (0..self.count).map(move |_| {
            let p = match dist {
                Distribution::Uniform => [
                    rng.gen_range(0.0..100.0),
                    rng.gen_range(0.0..100.0),
                    rng.gen_range(0.0..100.0),
                ],
                Distribution::Clustered => {
                    let c = BLOBS[rng.gen_range(0..BLOBS.len())];
                    c.map(|m| (m + 4.0 * gaussian(&mut rng)).clamp(0.0, 49.999))
                }
                Distribution::Planar => [rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0), 10.0],
            };
            let rgb = [
                (p[0] * 2.55) as u8,
                (p[1] * 2.55) as u8,
                (p[2] * 2.55) as u8,
            ];
            (p, rgb)
        })
    }

    pub fn write_ply(&self, path: impl AsRef<Path>, ascii: bool) -> Result<()> {
        let mut w = PlyWriter::create(path, self.count, ascii, Scalar::F32)?;
        for (p, c) in self.points() {
            w.write_point(p, c)?;
        }
        w.finish()
    }

    /// Writes LAS 1.2 point format 2 with millimeter quantization.
    pub fn write_las(&self, path: impl AsRef<Path>) -> Result<()> {
        let q = Quantization::new([0.001; 3], [0.0; 3]);
        let mut w = LasWriter::create(path, 2, 2, q)?;
        for (p, c) in self.points() {
            w.write_raw(q.quantize(p), c.map(|v| v as u16 * 257))?;
        }
        w.finish()
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
