//! Posed image datasets on disk: `manifest.json` plus one PNG per frame.

use std::fs;
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::camera::Camera;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::image::{load_png, Image};

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
/// Orthonormality tolerance for rotations read from disk.
pub const LOAD_ROTATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub file: String,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera-to-world rotation, row-major.
    pub rotation: [f64; 9],
    pub position: [f64; 3],
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub frames: Vec<FrameRecord>,
}

impl FrameRecord {
    pub fn camera(&self) -> Camera {
        Camera {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            rotation: Matrix3::from_row_slice(&self.rotation),
            position: Vec3::from(self.position),
            width: self.width,
            height: self.height,
        }
    }

    fn from_camera(camera: &Camera, file: String, split: Split) -> Self {
        let r = &camera.rotation;
        Self {
            file,
            width: camera.width,
            height: camera.height,
            fx: camera.fx,
            fy: camera.fy,
            cx: camera.cx,
            cy: camera.cy,
            rotation: std::array::from_fn(|i| r[(i / 3, i % 3)]),
            position: camera.position.into(),
            split,
        }
    }
}

/// Parse and validate a manifest without touching any image files.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let manifest: Manifest = serde_json::from_str(text).map_err(|e| Error::MalformedManifest(e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::MalformedManifest(format!(
            "unsupported version {} (expected {MANIFEST_VERSION})",
            manifest.version
        )));
    }
    for (index, f) in manifest.frames.iter().enumerate() {
        let finite = [f.fx, f.fy, f.cx, f.cy]
            .iter()
            .chain(&f.rotation)
            .chain(&f.position)
            .all(|v| v.is_finite());
        if !finite || f.fx <= 0.0 || f.fy <= 0.0 || f.width == 0 || f.height == 0 {
            return Err(Error::MalformedManifest(format!("frame {index} has invalid intrinsics")));
        }
        if f.file.is_empty() || Path::new(&f.file).is_absolute() || f.file.split(['/', '\\']).any(|c| c == "..") {
            return Err(Error::MalformedManifest(format!(
                "frame {index} file must be a relative path inside the dataset"
            )));
        }
        if Camera::rotation_error(&Matrix3::from_row_slice(&f.rotation)) > LOAD_ROTATION_TOL {
            return Err(Error::NonOrthonormalRotation { index });
        }
    }
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosedDataset {
    pub cameras: Vec<Camera>,
    pub images: Vec<Image>,
    pub splits: Vec<Split>,
}

impl PosedDataset {
    pub fn new(cameras: Vec<Camera>, images: Vec<Image>, splits: Vec<Split>) -> Result<Self> {
        if cameras.len() != images.len() || cameras.len() != splits.len() {
            return Err(Error::LengthMismatch(format!(
                "{} cameras, {} images, {} split labels",
                cameras.len(),
                images.len(),
                splits.len()
            )));
        }
        for (i, (c, img)) in cameras.iter().zip(&images).enumerate() {
            if c.width != img.width || c.height != img.height {
                return Err(Error::ShapeMismatch(format!(
                    "frame {i}: camera is {}x{}, image is {}x{}",
                    c.width, c.height, img.width, img.height
                )));
            }
        }
        Ok(Self { cameras, images, splits })
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn manifest(&self) -> Manifest {
        let frames = (0..self.len())
            .map(|i| {
                let file = format!("{}_{i:03}.png", split_name(self.splits[i]));
                FrameRecord::from_camera(&self.cameras[i], file, self.splits[i])
            })
            .collect();
        Manifest {
            version: MANIFEST_VERSION,
            frames,
        }
    }
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Test => "test",
    }
}

pub fn load_dataset(dir: &Path) -> Result<PosedDataset> {
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest = parse_manifest(&text)?;
    let mut cameras = Vec::with_capacity(manifest.frames.len());
    let mut images = Vec::with_capacity(manifest.frames.len());
    let mut splits = Vec::with_capacity(manifest.frames.len());
    for frame in &manifest.frames {
        let path = dir.join(&frame.file);
        if !path.is_file() {
            return Err(Error::MissingImage(path));
        }
        let img = Image::from_rgb8(&load_png(&path)?);
        cameras.push(frame.camera());
        images.push(img);
        splits.push(frame.split);
    }
    PosedDataset::new(cameras, images, splits)
}

pub fn save_dataset(dataset: &PosedDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dataset.manifest();
    for (frame, img) in manifest.frames.iter().zip(&dataset.images) {
        img.write_png(&dir.join(&frame.file))?;
    }
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = dir.join(MANIFEST);
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::camera::{hemisphere_cameras, ImageSpec};

    fn sample() -> PosedDataset {
        let cams = hemisphere_cameras(
            3,
            0.5,
            Vec3::zeros(),
            1,
            ImageSpec {
                width: 4,
                height: 3,
                fov_y: 0.8,
            },
        );
        let images = (0..3)
            .map(|k| Image::from_fn(4, 3, |x, y| [(x * 40 + k) as f64 / 255.0, (y * 70) as f64 / 255.0, 1.0]))
            .collect();
        PosedDataset::new(cams, images, vec![Split::Train, Split::Test, Split::Train]).unwrap()
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample();
        save_dataset(&ds, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn missing_image_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&sample(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("train_002.png")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::MissingImage(_))));
    }

    #[test]
    fn reflection_is_rejected() {
        let mut m = sample().manifest();
        m.frames[1].rotation = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0];
        let text = serde_json::to_string(&m).unwrap();
        assert!(matches!(parse_manifest(&text), Err(Error::NonOrthonormalRotation { index: 1 })));
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(parse_manifest("{"), Err(Error::MalformedManifest(_))));
        assert!(matches!(parse_manifest(r#"{"version":2,"frames":[]}"#), Err(Error::MalformedManifest(_))));
        let mut m = sample().manifest();
        m.frames[0].file = "../escape.png".into();
        let text = serde_json::to_string(&m).unwrap();
        assert!(matches!(parse_manifest(&text), Err(Error::MalformedManifest(_))));
    }
}
