//! Radiance-field networks with hand-written reverse mode.

mod adam;
mod arch;
pub mod checkpoint;
mod encoding;
mod linalg;
mod model;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use arch::{FieldArchitecture, InputKind, Variant};
pub use encoding::{encoded_len, positional_encode};
pub use model::{
    field_backward, field_forward, FieldModel, FieldOutput, FrozenOpacity, GradientSet, ParamArray, Trace,
};

use crate::error::Result;

/// Anything that answers density and color queries in batch.
///
/// Positions are `position_dim` values per sample (3 for Euclidean inputs,
/// `(x', y', z', 1/r)` for the outer volume); directions are unit 3-vectors.
pub trait RadianceField: Sync {
    fn input_kind(&self) -> InputKind;

    fn query_batch(&self, positions: &[f64], directions: &[f64]) -> Result<FieldOutput>;

    /// Like [`query_batch`](Self::query_batch), also returning a backward
    /// trace when the field is differentiable.
    fn query_traced(&self, positions: &[f64], directions: &[f64]) -> Result<(FieldOutput, Option<Trace>)> {
        self.query_batch(positions, directions).map(|out| (out, None))
    }
}

impl RadianceField for FieldModel {
    fn input_kind(&self) -> InputKind {
        self.arch.input_kind
    }

    fn query_batch(&self, positions: &[f64], directions: &[f64]) -> Result<FieldOutput> {
        self.forward_batch(positions, directions).map(|(out, _)| out)
    }

    fn query_traced(&self, positions: &[f64], directions: &[f64]) -> Result<(FieldOutput, Option<Trace>)> {
        self.forward_batch(positions, directions).map(|(out, trace)| (out, Some(trace)))
    }
}
