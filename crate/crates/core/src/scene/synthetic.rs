//! Analytic scenes: closed-form density and radiance used as ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::Camera;
use crate::error::{Error, Result};
use crate::field::{FieldOutput, InputKind, RadianceField};
use crate::geometry::{Ray, Vec3};
use crate::image::Image;

/// Stop marching once transmittance falls below this.
const OPAQUE_T: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    Box { center: [f64; 3], half_extents: [f64; 3] },
    /// Region between two concentric spheres; normals face the center.
    Shell { center: [f64; 3], inner: f64, outer: f64 },
}

impl Shape {
    fn center(&self) -> Vec3 {
        match *self {
            Shape::Sphere { center, .. } | Shape::Box { center, .. } | Shape::Shell { center, .. } => center.into(),
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let q = p - self.center();
        match *self {
            Shape::Sphere { radius, .. } => q.norm_squared() <= radius * radius,
            Shape::Box { half_extents, .. } => (0..3).all(|i| q[i].abs() <= half_extents[i]),
            Shape::Shell { inner, outer, .. } => {
                let r2 = q.norm_squared();
                r2 >= inner * inner && r2 <= outer * outer
            }
        }
    }

    fn normal(&self, p: &Vec3) -> Vec3 {
        let q = p - self.center();
        match *self {
            Shape::Sphere { .. } => q.try_normalize(0.0).unwrap_or_else(Vec3::z),
            Shape::Box { half_extents, .. } => {
                let axis = (0..3)
                    .max_by(|&a, &b| {
                        (q[a].abs() / half_extents[a]).total_cmp(&(q[b].abs() / half_extents[b]))
                    })
                    .expect("three axes");
                let mut n = Vec3::zeros();
                n[axis] = q[axis].signum();
                n
            }
            Shape::Shell { .. } => -q.try_normalize(0.0).unwrap_or_else(Vec3::z),
        }
    }

    /// Ray-parameter intervals (clipped to `t >= 0`) inside the shape.
    fn intervals(&self, ray: &Ray) -> Vec<(f64, f64)> {
        let o = ray.origin - self.center();
        let d = ray.direction;
        let sphere = |r: f64| -> Option<(f64, f64)> {
            let b = o.dot(&d);
            let c = o.norm_squared() - r * r;
            let disc = b * b - c;
            (disc > 0.0).then(|| (-b - disc.sqrt(), -b + disc.sqrt()))
        };
        let raw = match *self {
            Shape::Sphere { radius, .. } => sphere(radius).into_iter().collect(),
            Shape::Box { half_extents, .. } => {
                let mut lo = f64::NEG_INFINITY;
                let mut hi = f64::INFINITY;
                for i in 0..3 {
                    if d[i].abs() < 1e-15 {
                        if o[i].abs() > half_extents[i] {
                            return Vec::new();
                        }
                    } else {
                        let a = (-half_extents[i] - o[i]) / d[i];
                        let b = (half_extents[i] - o[i]) / d[i];
                        lo = lo.max(a.min(b));
                        hi = hi.min(a.max(b));
                    }
                }
                if lo < hi {
                    vec![(lo, hi)]
                } else {
                    Vec::new()
                }
            }
            Shape::Shell { inner, outer, .. } => match sphere(outer) {
                None => Vec::new(),
                Some((a, b)) => match sphere(inner) {
                    None => vec![(a, b)],
                    Some((c, e)) => vec![(a, c), (e, b)],
                },
            },
        };
        raw.into_iter()
            .map(|(a, b): (f64, f64)| (a.max(0.0), b))
            .filter(|(a, b)| b > a)
            .collect()
    }
}

/// Smooth procedural albedo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    Solid { rgb: [f64; 3] },
    /// Blend of two colors by `0.5 + 0.5 sin(fx) sin(fy) sin(fz)` in local coordinates.
    Waves { a: [f64; 3], b: [f64; 3], frequency: f64 },
    /// Bands along one axis: `0.5 + 0.5 sin(f p[axis])`.
    Bands { a: [f64; 3], b: [f64; 3], frequency: f64, axis: usize },
}

impl Texture {
    fn eval(&self, q: &Vec3) -> [f64; 3] {
        let mix = |a: [f64; 3], b: [f64; 3], t: f64| std::array::from_fn(|i| a[i] + (b[i] - a[i]) * t);
        match *self {
            Texture::Solid { rgb } => rgb,
            Texture::Waves { a, b, frequency } => {
                let t = 0.5 + 0.5 * (frequency * q.x).sin() * (frequency * q.y).sin() * (frequency * q.z).sin();
                mix(a, b, t)
            }
            Texture::Bands { a, b, frequency, axis } => {
                let t = 0.5 + 0.5 * (frequency * q[axis.min(2)]).sin();
                mix(a, b, t)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Material {
    Lambertian,
    /// Lambertian plus a specular lobe around the mirror direction.
    Phong { exponent: f64, strength: f64 },
    /// Emits the texture color directly (no shading).
    Emissive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub density: f64,
    pub albedo: Texture,
    pub material: Material,
}

impl Primitive {
    fn radiance(&self, p: &Vec3, d: &Vec3, light: &Vec3, ambient: f64) -> [f64; 3] {
        let albedo = self.albedo.eval(&(p - self.shape.center()));
        let n = self.shape.normal(p);
        let lambert = ambient + (1.0 - ambient) * n.dot(light).max(0.0);
        let spec = match self.material {
            Material::Emissive => return albedo.map(|c| c.clamp(0.0, 1.0)),
            Material::Lambertian => 0.0,
            Material::Phong { exponent, strength } => {
                let mirror = d - n * (2.0 * d.dot(&n));
                strength * mirror.dot(light).max(0.0).powf(exponent)
            }
        };
        albedo.map(|c| (c * lambert + spec).clamp(0.0, 1.0))
    }
}

/// Far emissive shell standing in for unbounded background content.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub radius: f64,
    pub thickness: f64,
    pub density: f64,
    pub texture: Texture,
}

impl Environment {
    fn primitive(&self) -> Primitive {
        Primitive {
            shape: Shape::Shell {
                center: [0.0; 3],
                inner: self.radius,
                outer: self.radius + self.thickness,
            },
            density: self.density,
            // Texture is evaluated on the unit direction.
            albedo: self.texture,
            material: Material::Emissive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub primitives: Vec<Primitive>,
    pub environment: Option<Environment>,
    /// Direction towards the light (normalized on use).
    pub light: [f64; 3],
    pub ambient: f64,
}

impl SyntheticScene {
    pub fn empty() -> Self {
        Self {
            primitives: Vec::new(),
            environment: None,
            light: [0.3, -0.4, 0.85],
            ambient: 0.25,
        }
    }

    fn all_primitives(&self) -> impl Iterator<Item = Primitive> + '_ {
        self.primitives.iter().copied().chain(self.environment.map(|e| e.primitive()))
    }

    pub fn density(&self, p: &Vec3) -> f64 {
        self.all_primitives()
            .filter(|prim| prim.shape.contains(p))
            .map(|prim| prim.density)
            .sum()
    }

    /// Density and density-weighted radiance at `p` viewed along `d`.
    pub fn query(&self, p: &Vec3, d: &Vec3) -> (f64, [f64; 3]) {
        let light = Vec3::from(self.light).normalize();
        let mut sigma = 0.0;
        let mut acc = [0.0; 3];
        for prim in self.all_primitives() {
            if !prim.shape.contains(p) {
                continue;
            }
            let c = match prim.material {
                Material::Emissive => prim.albedo.eval(&p.normalize()).map(|c| c.clamp(0.0, 1.0)),
                _ => prim.radiance(p, d, &light, self.ambient),
            };
            sigma += prim.density;
            for k in 0..3 {
                acc[k] += prim.density * c[k];
            }
        }
        if sigma > 0.0 {
            (sigma, acc.map(|c| c / sigma))
        } else {
            (0.0, [0.0; 3])
        }
    }

    /// Sorted, merged ray intervals with nonzero density.
    fn occupied(&self, ray: &Ray) -> Vec<(f64, f64)> {
        let mut spans: Vec<(f64, f64)> = self.all_primitives().flat_map(|p| p.shape.intervals(ray)).collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in spans {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        merged
    }

    /// Dense quadrature of the analytic fields along `ray`.
    ///
    /// Samples are split evenly over the occupied intervals; empty space
    /// contributes nothing and is skipped. With `jitter`, one uniform draw per
    /// bin replaces the bin midpoint.
    pub fn trace_ray(&self, ray: &Ray, n_samples: usize, jitter: Option<&mut ChaCha8Rng>) -> [f64; 3] {
        let spans = self.occupied(ray);
        if spans.is_empty() {
            return [0.0; 3];
        }
        let per_span = (n_samples / spans.len()).max(1);
        let mut rng = jitter;
        let mut transmittance = 1.0;
        let mut color = [0.0; 3];
        for (a, b) in spans {
            let width = (b - a) / per_span as f64;
            for i in 0..per_span {
                let u = match rng.as_deref_mut() {
                    Some(r) => r.random_range(0.0..1.0),
                    None => 0.5,
                };
                let t = a + (i as f64 + u) * width;
                let p = ray.at(t);
                let (sigma, c) = self.query(&p, &ray.direction);
                if sigma <= 0.0 {
                    continue;
                }
                let alpha = 1.0 - (-sigma * width).exp();
                let w = transmittance * alpha;
                for k in 0..3 {
                    color[k] += w * c[k];
                }
                transmittance *= 1.0 - alpha;
                if transmittance < OPAQUE_T {
                    return color;
                }
            }
        }
        color
    }

    /// Check every density and radiance sample stays in range.
    pub fn validate(&self) -> Result<()> {
        let bad = self
            .all_primitives()
            .any(|p| !(p.density.is_finite() && p.density >= 0.0));
        if bad {
            return Err(Error::InvalidConfig("primitive densities must be finite and non-negative".into()));
        }
        Ok(())
    }

    // Presets -------------------------------------------------------------

    /// Glossy banded sphere, a matte box and a textured ground slab, all
    /// within radius 0.5 of the origin. No background content.
    pub fn glossy() -> Self {
        Self {
            primitives: vec![
                Primitive {
                    shape: Shape::Sphere {
                        center: [0.0, 0.0, 0.05],
                        radius: 0.2,
                    },
                    density: 80.0,
                    albedo: Texture::Bands {
                        a: [0.85, 0.25, 0.2],
                        b: [0.95, 0.8, 0.3],
                        frequency: 25.0,
                        axis: 2,
                    },
                    material: Material::Phong {
                        exponent: 12.0,
                        strength: 0.6,
                    },
                },
                Primitive {
                    shape: Shape::Box {
                        center: [0.22, -0.2, -0.07],
                        half_extents: [0.07, 0.07, 0.08],
                    },
                    density: 80.0,
                    albedo: Texture::Solid { rgb: [0.2, 0.45, 0.85] },
                    material: Material::Phong {
                        exponent: 8.0,
                        strength: 0.4,
                    },
                },
                Primitive {
                    shape: Shape::Box {
                        center: [0.0, 0.0, -0.2],
                        half_extents: [0.42, 0.42, 0.05],
                    },
                    density: 80.0,
                    albedo: Texture::Waves {
                        a: [0.3, 0.6, 0.3],
                        b: [0.85, 0.85, 0.75],
                        frequency: 14.0,
                    },
                    material: Material::Lambertian,
                },
            ],
            environment: None,
            light: [0.3, -0.4, 0.85],
            ambient: 0.3,
        }
    }

    /// Foreground objects near the origin, mid-distance objects at radius 2-8
    /// and an emissive sky shell at radius 200.
    pub fn unbounded() -> Self {
        let mut scene = Self::glossy();
        scene.primitives.truncate(2);
        let mid = [
            ([3.0, 0.5, 0.0], 0.9, [0.9, 0.6, 0.2]),
            ([-2.0, 2.5, 0.4], 0.7, [0.3, 0.8, 0.5]),
            ([-1.5, -4.5, 0.8], 1.4, [0.6, 0.4, 0.9]),
            ([5.5, -4.0, -0.5], 1.8, [0.9, 0.9, 0.9]),
        ];
        for (center, radius, rgb) in mid {
            scene.primitives.push(Primitive {
                shape: Shape::Sphere { center, radius },
                density: 40.0,
                albedo: Texture::Waves {
                    a: rgb,
                    b: rgb.map(|c| c * 0.45),
                    frequency: 3.0 / radius,
                },
                material: Material::Lambertian,
            });
        }
        scene.environment = Some(Environment {
            radius: 200.0,
            thickness: 20.0,
            density: 1.0,
            texture: Texture::Waves {
                a: [0.35, 0.55, 0.9],
                b: [0.95, 0.85, 0.7],
                frequency: 4.0,
            },
        });
        scene
    }

    /// Radius of a sphere enclosing every primitive and the environment.
    pub fn bounding_radius(&self) -> f64 {
        self.all_primitives()
            .map(|p| match p.shape {
                Shape::Sphere { center, radius } => Vec3::from(center).norm() + radius,
                Shape::Box { center, half_extents } => Vec3::from(center).norm() + Vec3::from(half_extents).norm(),
                Shape::Shell { center, outer, .. } => Vec3::from(center).norm() + outer,
            })
            .fold(0.0, f64::max)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "glossy" => Ok(Self::glossy()),
            "unbounded" => Ok(Self::unbounded()),
            "empty" => Ok(Self::empty()),
            other => Err(Error::InvalidConfig(format!(
                "unknown scene preset '{other}' (expected glossy, unbounded or empty)"
            ))),
        }
    }
}

impl RadianceField for SyntheticScene {
    fn input_kind(&self) -> InputKind {
        InputKind::Euclidean3d
    }

    fn query_batch(&self, positions: &[f64], directions: &[f64]) -> Result<FieldOutput> {
        if positions.len() != directions.len() {
            return Err(Error::ShapeMismatch("analytic scene takes 3D positions".into()));
        }
        let mut sigma = Vec::with_capacity(positions.len() / 3);
        let mut color = Vec::with_capacity(positions.len());
        for (p, d) in positions.chunks_exact(3).zip(directions.chunks_exact(3)) {
            let (s, c) = self.query(&Vec3::from_column_slice(p), &Vec3::from_column_slice(d));
            sigma.push(s);
            color.extend_from_slice(&c);
        }
        Ok(FieldOutput { sigma, color })
    }
}

/// Ground-truth image by dense quadrature of the analytic scene.
pub fn oracle_render(scene: &SyntheticScene, camera: &Camera, n_samples: usize) -> Image {
    oracle_render_jittered(scene, camera, n_samples, None)
}

/// [`oracle_render`] with per-pixel stratified jitter seeded by `seed`.
pub fn oracle_render_jittered(scene: &SyntheticScene, camera: &Camera, n_samples: usize, seed: Option<u64>) -> Image {
    let rays = camera.rays();
    let pixels: Vec<[f64; 3]> = rays
        .par_iter()
        .enumerate()
        .map(|(i, ray)| match seed {
            Some(s) => {
                let mut rng = ChaCha8Rng::seed_from_u64(s ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                scene.trace_ray(ray, n_samples, Some(&mut rng))
            }
            None => scene.trace_ray(ray, n_samples, None),
        })
        .collect();
    Image {
        width: camera.width,
        height: camera.height,
        data: pixels.into_iter().flatten().collect(),
    }
}
