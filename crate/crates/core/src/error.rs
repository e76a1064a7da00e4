use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ray origin lies outside the unit sphere (|o| = {0})")]
    OriginOutsideSphere(f64),
    #[error("point lies inside the unit sphere (|p| = {0})")]
    PointInsideSphere(f64),
    #[error("inverse radius {0} outside (0, 1]")]
    InvalidInvRadius(f64),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("trace does not match the model or cotangent batch: {0}")]
    TraceMismatch(String),
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("empty interval [{0}, {1}]")]
    EmptyInterval(f64, f64),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("degenerate bins: {0}")]
    DegenerateBins(String),

    #[error("pixel ({0}, {1}) outside image bounds")]
    OutOfBounds(f64, f64),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("missing image {0}")]
    MissingImage(PathBuf),
    #[error("rotation of image {index} is not a proper orthonormal matrix")]
    NonOrthonormalRotation { index: usize },

    #[error("image smaller than the {0}x{0} SSIM window")]
    ImageTooSmall(usize),

    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: usize, detail: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
