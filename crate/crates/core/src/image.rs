//! Float RGB image buffer plus PNG and raw-f64 IO.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::RgbImage;

use crate::error::{Error, Result};

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.data.len() == other.data.len()
    }

    /// Clamps to `[0, 1]`, scales by 255 and rounds half up.
    pub fn to_rgb8(&self) -> RgbImage {
        let bytes = self.data.iter().map(|&v| quantize(v)).collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, bytes).expect("buffer sized by construction")
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&b| b as f64 / 255.0).collect(),
        }
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        save_png(&self.to_rgb8(), path)
    }

    /// `width: u32 LE`, `height: u32 LE`, then `3 * width * height` f64 LE.
    pub fn write_raw(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(8 + self.data.len() * 8);
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_raw(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_raw(&bytes)
    }

    pub fn decode_raw(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::ShapeMismatch(format!("raw image: {m}"));
        if bytes.len() < 8 {
            return Err(bad("truncated header"));
        }
        let width = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
        let height = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(24))
            .ok_or_else(|| bad("dimensions overflow"))?;
        if bytes.len() - 8 != expected {
            return Err(bad("payload length does not match dimensions"));
        }
        let data = bytes[8..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self { width, height, data })
    }

    /// Places `other` to the right of `self` (heights must agree).
    pub fn side_by_side(&self, other: &Image) -> Image {
        assert_eq!(self.height, other.height);
        Image::from_fn(self.width + other.width, self.height, |x, y| {
            if x < self.width {
                self.pixel(x, y)
            } else {
                other.pixel(x - self.width, y)
            }
        })
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn load_png(path: &Path) -> Result<RgbImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn decode_png(bytes: &[u8]) -> std::result::Result<RgbImage, image::ImageError> {
    Ok(image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.to_rgb8())
}
