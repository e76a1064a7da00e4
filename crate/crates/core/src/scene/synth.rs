use serde::{Deserialize, Serialize};

use super::camera::{hemisphere_cameras, ImageSpec};
use super::dataset::{PosedDataset, Split};
use super::synthetic::{oracle_render, SyntheticScene};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// How to render a posed dataset from an analytic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Preset name (`glossy`, `unbounded`, `empty`).
    pub scene: String,
    pub n_train: usize,
    pub n_test: usize,
    pub width: usize,
    pub height: usize,
    pub fov_y: f64,
    /// Camera distance from `look_at`.
    pub radius: f64,
    pub look_at: [f64; 3],
    pub oracle_samples: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            scene: "glossy".into(),
            n_train: 20,
            n_test: 10,
            width: 64,
            height: 64,
            fov_y: 0.9,
            radius: 0.7,
            look_at: [0.0, 0.0, -0.05],
            oracle_samples: 1024,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 {
            return Err(Error::InvalidConfig("n_train must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("image size must be positive".into()));
        }
        if self.oracle_samples < 256 {
            return Err(Error::InvalidConfig("oracle_samples must be at least 256".into()));
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(Error::InvalidConfig("fov_y must lie in (0, pi)".into()));
        }
        if !(self.radius > 0.0 && Vec3::from(self.look_at).norm() + self.radius < 1.0) {
            return Err(Error::InvalidConfig("cameras must lie inside the unit sphere".into()));
        }
        Ok(())
    }

    pub fn scene(&self) -> Result<SyntheticScene> {
        SyntheticScene::preset(&self.scene)
    }
}

/// Test slots spread evenly through one pose stream of `n_train + n_test`.
pub fn interleaved_splits(n_train: usize, n_test: usize) -> Vec<Split> {
    let total = n_train + n_test;
    (0..total)
        .map(|i| {
            if (i + 1) * n_test / total > i * n_test / total {
                Split::Test
            } else {
                Split::Train
            }
        })
        .collect()
}

/// Oracle-rendered dataset with hemisphere poses.
pub fn synthesize(spec: &SynthSpec, seed: u64) -> Result<PosedDataset> {
    spec.validate()?;
    let scene = spec.scene()?;
    let image = ImageSpec {
        width: spec.width,
        height: spec.height,
        fov_y: spec.fov_y,
    };
    let splits = interleaved_splits(spec.n_train, spec.n_test);
    let cameras = hemisphere_cameras(splits.len(), spec.radius, Vec3::from(spec.look_at), seed, image);
    let images = cameras
        .iter()
        .map(|c| {
            // Store exactly what a PNG round trip would give back.
            let img = oracle_render(&scene, c, spec.oracle_samples);
            crate::image::Image::from_rgb8(&img.to_rgb8())
        })
        .collect();
    PosedDataset::new(cameras, images, splits)
}
