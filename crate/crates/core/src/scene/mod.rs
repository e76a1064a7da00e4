//! Cameras, analytic ground-truth scenes and posed datasets.

pub mod analytic;
pub mod camera;
pub mod dataset;
pub mod synth;
pub mod synthetic;

pub use camera::{generate_ray, hemisphere_cameras, Camera, ImageSpec};
pub use dataset::{load_dataset, parse_manifest, save_dataset, PosedDataset, Split};
pub use synth::{interleaved_splits, synthesize, SynthSpec};
pub use synthetic::{oracle_render, oracle_render_jittered, Environment, Material, Primitive, Shape, SyntheticScene, Texture};
