//! Axis-aligned boxes and the octant convention shared by the builder and the
//! traverser.

use glam::DVec3;
use serde::{Deserialize, Serialize};

/// Default quantization step (one millimeter).
pub const DEFAULT_SCALE: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    /// Degenerate box holding one point.
    pub fn point(p: [f64; 3]) -> Self {
        Self { min: p, max: p }
    }

    /// Inverted box, the identity for [`Aabb::extend`].
    pub fn empty() -> Self {
        Self {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn extend(&mut self, p: [f64; 3]) {
        for i in 0..3 {
            self.min[i] = self.min[i].min(p[i]);
            self.max[i] = self.max[i].max(p[i]);
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        out.extend(other.min);
        out.extend(other.max);
        out
    }

    pub fn min_v(&self) -> DVec3 {
        DVec3::from_array(self.min)
    }

    pub fn max_v(&self) -> DVec3 {
        DVec3::from_array(self.max)
    }

    pub fn center(&self) -> DVec3 {
        (self.min_v() + self.max_v()) * 0.5
    }

    pub fn extent(&self) -> DVec3 {
        self.max_v() - self.min_v()
    }

    /// Midpoint per axis, computed exactly as the octant split uses it.
    pub fn midpoint(&self) -> [f64; 3] {
        [
            (self.min[0] + self.max[0]) * 0.5,
            (self.min[1] + self.max[1]) * 0.5,
            (self.min[2] + self.max[2]) * 0.5,
        ]
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Radius of the sphere circumscribing the box.
    pub fn bounding_radius(&self) -> f64 {
        self.extent().length() * 0.5
    }

    /// The `k`-th octant: bit 2 selects the high x half, bit 1 y, bit 0 z.
    pub fn octant(&self, k: u8) -> Aabb {
        let mid = self.midpoint();
        let mut out = *self;
        for (axis, bit) in [(0usize, 4u8), (1, 2), (2, 1)] {
            if k & bit != 0 {
                out.min[axis] = mid[axis];
            } else {
                out.max[axis] = mid[axis];
            }
        }
        out
    }

    pub fn corners(&self) -> [[f64; 3]; 8] {
        let mut out = [[0.0; 3]; 8];
        for (k, c) in out.iter_mut().enumerate() {
            *c = [
                if k & 4 != 0 { self.max[0] } else { self.min[0] },
                if k & 2 != 0 { self.max[1] } else { self.min[1] },
                if k & 1 != 0 { self.max[2] } else { self.min[2] },
            ];
        }
        out
    }
}

/// Cube centred on `b` with side equal to its largest extent.
///
/// A box with zero extent on every axis becomes a cube of side
/// [`DEFAULT_SCALE`].
pub fn cube_bounds(b: &Aabb) -> Aabb {
    cube_bounds_with_step(b, DEFAULT_SCALE)
}

/// [`cube_bounds`] with an explicit minimum side for degenerate input.
pub fn cube_bounds_with_step(b: &Aabb, step: f64) -> Aabb {
    let ext = b.extent();
    let mut side = ext.max_element();
    if side <= 0.0 {
        side = step;
    }
    let half = side * 0.5;
    let center = b.center();
    let mut out = Aabb::empty();
    for i in 0..3 {
        let mut lo = center[i] - half;
        let mut hi = lo + side;
        // rounding in center +- half must never shrink the box below `b`
        if lo > b.min[i] {
            lo = b.min[i];
        }
        if hi < b.max[i] {
            hi = b.max[i];
        }
        out.min[i] = lo;
        out.max[i] = hi;
    }
    out
}

/// Octant of `p` inside `node`. Coordinates equal to the midpoint go high.
pub fn child_index(p: [f64; 3], node: &Aabb) -> u8 {
    let mid = node.midpoint();
    ((p[0] >= mid[0]) as u8) << 2 | ((p[1] >= mid[1]) as u8) << 1 | (p[2] >= mid[2]) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Aabb {
        Aabb::new([0.0; 3], [1.0; 3])
    }

    #[test]
    fn cube_of_flat_box() {
        let b = Aabb::new([0.0, 0.0, 0.0], [2.0, 1.0, 1.0]);
        assert_eq!(cube_bounds(&b), Aabb::new([0.0, -0.5, -0.5], [2.0, 1.5, 1.5]));
    }

    #[test]
    fn cube_is_idempotent() {
        let b = Aabb::new([-3.0, 1.0, 2.0], [1.0, 5.0, 6.0]);
        assert_eq!(cube_bounds(&b), b);
        assert_eq!(cube_bounds(&cube_bounds(&b)), b);
    }

    #[test]
    fn cube_of_single_point() {
        let c = cube_bounds(&Aabb::point([1.0, 2.0, 3.0]));
        for i in 0..3 {
            assert!((c.max[i] - c.min[i] - 0.001).abs() < 1e-12);
            assert!(c.contains([1.0, 2.0, 3.0]));
        }
    }

    #[test]
    fn cube_contains_input_despite_rounding() {
        let b = Aabb::new([0.1, 0.2, 0.3], [0.7, 0.25, 0.31]);
        let c = cube_bounds(&b);
        assert!(c.contains(b.min) && c.contains(b.max));
    }

    #[test]
    fn child_index_examples() {
        assert_eq!(child_index([0.6, 0.2, 0.9], &unit()), 0b101);
        assert_eq!(child_index([0.5, 0.5, 0.5], &unit()), 7);
        assert_eq!(child_index([0.0, 0.0, 0.0], &unit()), 0);
    }

    #[test]
    fn octant_matches_child_index() {
        let b = unit();
        for k in 0..8u8 {
            let o = b.octant(k);
            assert_eq!(child_index(o.center().to_array(), &b), k);
            assert_eq!(child_index(o.min, &b), k);
        }
    }
}
