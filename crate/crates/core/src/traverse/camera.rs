use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Aabb;

/// Perspective camera. `forward` and `up` need not be orthonormal; the
/// view basis is derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CameraState {
    pub position: [f64; 3],
    pub forward: [f64; 3],
    pub up: [f64; 3],
    pub vertical_fov_radians: f64,
    pub aspect: f64,
    pub near_plane: f64,
    pub far_plane: f64,
    pub screen_height_pixels: u32,
}

/// Orthonormal view basis: `right`, `up`, `forward` (depth axis).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewBasis {
    pub origin: DVec3,
    pub right: DVec3,
    pub up: DVec3,
    pub forward: DVec3,
}

impl ViewBasis {
    /// Coordinates of `p` as (right, up, depth along forward).
    #[inline]
    pub fn to_view(&self, p: DVec3) -> DVec3 {
        let d = p - self.origin;
        DVec3::new(d.dot(self.right), d.dot(self.up), d.dot(self.forward))
    }
}

impl CameraState {
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        position: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        vertical_fov_radians: f64,
        aspect: f64,
        near_plane: f64,
        far_plane: f64,
        screen_height_pixels: u32,
    ) -> Result<Self> {
        let forward = (DVec3::from_array(target) - DVec3::from_array(position)).to_array();
        let cam = Self {
            position,
            forward,
            up,
            vertical_fov_radians,
            aspect,
            near_plane,
            far_plane,
            screen_height_pixels,
        };
        cam.basis()?;
        Ok(cam)
    }

    pub fn position_v(&self) -> DVec3 {
        DVec3::from_array(self.position)
    }

    pub fn screen_width_pixels(&self) -> u32 {
        ((self.screen_height_pixels as f64 * self.aspect).round() as u32).max(1)
    }

    pub fn tan_half_fov_y(&self) -> f64 {
        (self.vertical_fov_radians * 0.5).tan()
    }

    pub fn tan_half_fov_x(&self) -> f64 {
        self.tan_half_fov_y() * self.aspect
    }

    pub fn validate(&self) -> Result<()> {
        self.basis().map(|_| ())
    }

    /// Orthonormalized basis. Fails for zero or parallel axes and invalid
    /// projection parameters.
    pub fn basis(&self) -> Result<ViewBasis> {
        let bad = |m: &str| Err(Error::DegenerateCamera(m.to_string()));
        let finite = |v: [f64; 3]| v.iter().all(|c| c.is_finite());
        if !finite(self.position) || !finite(self.forward) || !finite(self.up) {
            return bad("non-finite camera vector");
        }
        if !(self.near_plane > 0.0 && self.near_plane < self.far_plane) {
            return bad("require 0 < near < far");
        }
        if !(self.vertical_fov_radians > 0.0 && self.vertical_fov_radians < std::f64::consts::PI) {
            return bad("fov must be in (0, pi)");
        }
        if !(self.aspect > 0.0 && self.aspect.is_finite()) {
            return bad("aspect must be positive");
        }
        if self.screen_height_pixels == 0 {
            return bad("screen height must be positive");
        }
        let forward = DVec3::from_array(self.forward);
        let up = DVec3::from_array(self.up);
        if forward.length_squared() == 0.0 || up.length_squared() == 0.0 {
            return bad("zero-length axis");
        }
        let forward = forward.normalize();
        let right = forward.cross(up);
        if right.length() < 1e-9 * up.length() {
            return bad("forward parallel to up");
        }
        let right = right.normalize();
        let up = right.cross(forward);
        Ok(ViewBasis {
            origin: self.position_v(),
            right,
            up,
            forward,
        })
    }

    /// Normalized device x, y in [-1, 1] and view depth of `p`, or `None`
    /// when `p` lies outside the view volume.
    pub fn project(&self, basis: &ViewBasis, p: DVec3) -> Option<(f64, f64, f64)> {
        let v = basis.to_view(p);
        let depth = v.z;
        if depth < self.near_plane || depth > self.far_plane {
            return None;
        }
        let nx = v.x / (depth * self.tan_half_fov_x());
        let ny = v.y / (depth * self.tan_half_fov_y());
        (nx.abs() <= 1.0 && ny.abs() <= 1.0).then_some((nx, ny, depth))
    }
}

/// Plane with inward unit normal: `p` is on the inside iff `n·p + d >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: DVec3,
    pub d: f64,
}

impl Plane {
    fn through(normal: DVec3, point: DVec3) -> Self {
        let normal = normal.normalize();
        Self {
            normal,
            d: -normal.dot(point),
        }
    }

    #[inline]
    pub fn distance(&self, p: DVec3) -> f64 {
        self.normal.dot(p) + self.d
    }
}

/// Near, far, left, right, bottom, top.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frustum {
    pub planes: [Plane; 6],
}

impl Frustum {
    pub fn contains(&self, p: DVec3) -> bool {
        self.planes.iter().all(|pl| pl.distance(p) >= 0.0)
    }
}

pub fn extract_frustum(cam: &CameraState) -> Result<Frustum> {
    let b = cam.basis()?;
    let o = b.origin;
    let tx = cam.tan_half_fov_x();
    let ty = cam.tan_half_fov_y();
    Ok(Frustum {
        planes: [
            Plane::through(b.forward, o + b.forward * cam.near_plane),
            Plane::through(-b.forward, o + b.forward * cam.far_plane),
            // x >= -depth * tx
            Plane::through(b.right + b.forward * tx, o),
            // x <= depth * tx
            Plane::through(-b.right + b.forward * tx, o),
            Plane::through(b.up + b.forward * ty, o),
            Plane::through(-b.up + b.forward * ty, o),
        ],
    })
}

/// Positive-vertex test: false only if the box lies entirely outside one
/// plane. May report some outside boxes as visible, never the reverse.
pub fn aabb_visible(b: &Aabb, f: &Frustum) -> bool {
    f.planes.iter().all(|pl| {
        let n = pl.normal;
        let p = DVec3::new(
            if n.x >= 0.0 { b.max[0] } else { b.min[0] },
            if n.y >= 0.0 { b.max[1] } else { b.min[1] },
            if n.z >= 0.0 { b.max[2] } else { b.min[2] },
        );
        pl.distance(p) >= 0.0
    })
}

/// Estimated on-screen radius in pixels of the sphere around `b`;
/// infinite when the camera is inside the sphere.
pub fn node_priority(b: &Aabb, cam: &CameraState) -> f64 {
    let r = b.bounding_radius();
    let dist = cam.position_v().distance(b.center());
    if dist <= r {
        return f64::INFINITY;
    }
    let d = (dist - r).max(cam.near_plane);
    r / d * (cam.screen_height_pixels as f64 / (2.0 * cam.tan_half_fov_y()))
}
