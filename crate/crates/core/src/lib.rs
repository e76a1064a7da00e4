// `!(a < b)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Indexed loops over parallel channel arrays read better in numeric kernels.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod field;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod render;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
