//! Ray and sphere geometry for the two-volume scene split.
//!
//! The scene is divided by the unit sphere into an inner volume (cameras and
//! foreground) and an outer volume. Outer points are addressed by a unit
//! direction plus an inverse radius, and [`outer_direction`] recovers that
//! direction for any inverse radius along a ray without ever forming the
//! (possibly huge) Euclidean point.

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Below this chord-midpoint norm a ray is treated as passing through the origin.
pub const THROUGH_ORIGIN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// A point of the outer volume as `(x', y', z', 1/r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvertedSpherePoint {
    pub direction: Vec3,
    pub inv_radius: f64,
}

impl InvertedSpherePoint {
    pub fn to_array(&self) -> [f64; 4] {
        [
            self.direction.x,
            self.direction.y,
            self.direction.z,
            self.inv_radius,
        ]
    }

    pub fn to_euclidean(&self) -> Vec3 {
        self.direction / self.inv_radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereCrossing {
    /// Depth at which the ray leaves the unit sphere.
    pub t_far: f64,
    /// Depth of the chord midpoint (closest approach to the origin).
    pub t_mid: f64,
    pub midpoint: Vec3,
    pub far_point: Vec3,
}

pub fn intersect_unit_sphere(ray: &Ray) -> Result<SphereCrossing> {
    let o = ray.origin;
    let d = ray.direction;
    let o_norm = o.norm();
    if !(o_norm < 1.0) {
        return Err(Error::OriginOutsideSphere(o_norm));
    }
    let t_mid = -d.dot(&o);
    let midpoint = o + d * t_mid;
    // |o + t d|^2 = 1 with |d| = 1: t = t_mid ± sqrt(1 - |b|^2)
    let half_chord = (1.0 - midpoint.norm_squared()).max(0.0).sqrt();
    let t_far = t_mid + half_chord;
    Ok(SphereCrossing {
        t_far,
        t_mid,
        midpoint,
        far_point: o + d * t_far,
    })
}

/// Direction `(x', y', z')` of the point at inverse radius `inv_r` on the
/// outgoing part of `ray`.
///
/// The exit point is rotated about `b x d` by
/// `asin|b| - asin(|b| * inv_r)`, where `b` is the chord midpoint.
pub fn outer_direction(crossing: &SphereCrossing, ray: &Ray, inv_r: f64) -> Result<Vec3> {
    if !(inv_r > 0.0 && inv_r <= 1.0) {
        return Err(Error::InvalidInvRadius(inv_r));
    }
    let b = crossing.midpoint;
    let b_norm = b.norm();
    if b_norm < THROUGH_ORIGIN_EPS {
        return Ok(ray.direction);
    }
    let axis = b.cross(&ray.direction).normalize();
    let s = b_norm.min(1.0);
    let omega = s.asin() - (s * inv_r).asin();
    let rotated = rotate_about_axis(&crossing.far_point, &axis, omega);
    Ok(rotated.normalize())
}

pub fn reparam_point(p: &Vec3) -> Result<InvertedSpherePoint> {
    let r = p.norm();
    if !(r > 1.0) {
        return Err(Error::PointInsideSphere(r));
    }
    Ok(InvertedSpherePoint {
        direction: p / r,
        inv_radius: 1.0 / r,
    })
}

/// Rodrigues rotation of `v` about the unit `axis`.
pub fn rotate_about_axis(v: &Vec3, axis: &Vec3, angle: f64) -> Vec3 {
    let (sin, cos) = angle.sin_cos();
    v * cos + axis.cross(v) * sin + axis * (axis.dot(v) * (1.0 - cos))
}

/// Translation + uniform scale mapping world space into the normalized frame.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimilarityTransform {
    pub center: [f64; 3],
    pub scale: f64,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            center: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p - Vec3::from(self.center)) * self.scale
    }
}

/// Centers the camera positions on their centroid and scales them so the
/// farthest camera sits at `target_radius`.
///
/// Identical positions leave the scale at 1.
pub fn normalize_scene(camera_positions: &[Vec3], target_radius: f64) -> Result<SimilarityTransform> {
    if camera_positions.is_empty() {
        return Err(Error::DegenerateInput("no camera positions".into()));
    }
    if !(target_radius > 0.0 && target_radius <= 1.0) {
        return Err(Error::DegenerateInput(format!(
            "target radius {target_radius} outside (0, 1]"
        )));
    }
    let centroid =
        camera_positions.iter().fold(Vec3::zeros(), |acc, p| acc + p) / camera_positions.len() as f64;
    let max_dist = camera_positions
        .iter()
        .map(|p| (p - centroid).norm())
        .fold(0.0, f64::max);
    let scale = if max_dist > 0.0 {
        target_radius / max_dist
    } else {
        1.0
    };
    Ok(SimilarityTransform {
        center: centroid.into(),
        scale,
    })
}
