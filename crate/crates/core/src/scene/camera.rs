use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Ray, Vec3};

/// Tolerance for rotation orthonormality checks on generated poses.
pub const ROTATION_TOL: f64 = 1e-9;

/// Pinhole camera; `rotation` maps camera axes (x right, y down, z forward)
/// to world axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Matrix3<f64>,
    pub position: Vec3,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Square-pixel camera at `position` looking at `target`, with the world
    /// `up` vector orthogonalized against the view direction.
    pub fn look_at(position: Vec3, target: Vec3, up: Vec3, width: usize, height: usize, fov_y: f64) -> Self {
        let forward = (target - position).normalize();
        let mut up_perp = up - forward * forward.dot(&up);
        if up_perp.norm() < 1e-9 {
            // Looking straight along `up`; any perpendicular works.
            let alt = if forward.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            up_perp = alt - forward * forward.dot(&alt);
        }
        let up_perp = up_perp.normalize();
        let right = forward.cross(&up_perp).normalize();
        let down = forward.cross(&right);
        let focal = 0.5 * height as f64 / (0.5 * fov_y).tan();
        Self {
            fx: focal,
            fy: focal,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            rotation: Matrix3::from_columns(&[right, down, forward]),
            position,
            width,
            height,
        }
    }

    /// Largest deviation of `R^T R` from identity, or infinity when `det R <= 0`.
    pub fn rotation_error(rotation: &Matrix3<f64>) -> f64 {
        if rotation.determinant() <= 0.0 {
            return f64::INFINITY;
        }
        (rotation.transpose() * rotation - Matrix3::identity()).amax()
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        if Self::rotation_error(&self.rotation) > tol {
            return Err(Error::NonOrthonormalRotation { index: 0 });
        }
        Ok(())
    }

    /// Ray through the center of pixel `(x, y)`.
    pub fn pixel_ray(&self, x: usize, y: usize) -> Ray {
        self.ray_at(x as f64 + 0.5, y as f64 + 0.5)
    }

    fn ray_at(&self, px: f64, py: f64) -> Ray {
        let local = Vec3::new((px - self.cx) / self.fx, (py - self.cy) / self.fy, 1.0);
        Ray::new(self.position, self.rotation * local)
    }

    /// All pixel-center rays in row-major order.
    pub fn rays(&self) -> Vec<Ray> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .map(|(x, y)| self.pixel_ray(x, y))
            .collect()
    }

    pub fn transformed(&self, center: &Vec3, scale: f64) -> Self {
        Self {
            position: (self.position - center) * scale,
            ..self.clone()
        }
    }
}

/// Ray through continuous pixel coordinates `(px, py)`.
pub fn generate_ray(camera: &Camera, px: f64, py: f64) -> Result<Ray> {
    if !(px >= 0.0 && py >= 0.0 && px <= camera.width as f64 && py <= camera.height as f64) {
        return Err(Error::OutOfBounds(px, py));
    }
    Ok(camera.ray_at(px, py))
}

/// Image size and field of view shared by generated poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSpec {
    pub width: usize,
    pub height: usize,
    pub fov_y: f64,
}

/// `n` cameras uniformly distributed on the upper hemisphere of `radius`
/// around `look_at`, all facing `look_at` with world up `+z`.
pub fn hemisphere_cameras(n: usize, radius: f64, look_at: Vec3, seed: u64, image: ImageSpec) -> Vec<Camera> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            // Uniform height on [0, 1] gives uniform area on the hemisphere.
            let z: f64 = rng.random_range(0.0..1.0);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let ring = (1.0 - z * z).sqrt();
            let offset = Vec3::new(ring * phi.cos(), ring * phi.sin(), z) * radius;
            Camera::look_at(look_at + offset, look_at, Vec3::z(), image.width, image.height, image.fov_y)
        })
        .collect()
}
