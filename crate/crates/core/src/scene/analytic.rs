//! Tiny closed-form fields for checking renderers.

use crate::error::{Error, Result};
use crate::field::{FieldOutput, InputKind, RadianceField};

fn batch_len(kind: InputKind, positions: &[f64], directions: &[f64]) -> Result<usize> {
    let n = directions.len() / 3;
    if !directions.len().is_multiple_of(3) || positions.len() != n * kind.position_dim() {
        return Err(Error::ShapeMismatch(format!(
            "{} positions for {} directions",
            positions.len(),
            directions.len()
        )));
    }
    Ok(n)
}

/// Same density and color everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantField {
    pub input_kind: InputKind,
    pub sigma: f64,
    pub color: [f64; 3],
}

impl ConstantField {
    pub fn vacuum(input_kind: InputKind) -> Self {
        Self {
            input_kind,
            sigma: 0.0,
            color: [0.0; 3],
        }
    }
}

impl RadianceField for ConstantField {
    fn input_kind(&self) -> InputKind {
        self.input_kind
    }

    fn query_batch(&self, positions: &[f64], directions: &[f64]) -> Result<FieldOutput> {
        let n = batch_len(self.input_kind, positions, directions)?;
        Ok(FieldOutput {
            sigma: vec![self.sigma; n],
            color: self.color.repeat(n),
        })
    }
}

/// Constant density inside a Euclidean ball centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformBall {
    pub radius: f64,
    pub sigma: f64,
    pub color: [f64; 3],
}

impl RadianceField for UniformBall {
    fn input_kind(&self) -> InputKind {
        InputKind::Euclidean3d
    }

    fn query_batch(&self, positions: &[f64], directions: &[f64]) -> Result<FieldOutput> {
        let n = batch_len(InputKind::Euclidean3d, positions, directions)?;
        let r2 = self.radius * self.radius;
        let sigma = positions
            .chunks_exact(3)
            .map(|p| if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= r2 { self.sigma } else { 0.0 })
            .collect();
        Ok(FieldOutput {
            sigma,
            color: self.color.repeat(n),
        })
    }
}

/// Outer-volume emitter occupying `lo <= 1/r <= hi`, with density measured
/// per unit of inverse radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseRadiusBand {
    pub lo: f64,
    pub hi: f64,
    pub sigma: f64,
    pub color: [f64; 3],
}

impl RadianceField for InverseRadiusBand {
    fn input_kind(&self) -> InputKind {
        InputKind::InvertedSphere4d
    }

    fn query_batch(&self, positions: &[f64], directions: &[f64]) -> Result<FieldOutput> {
        let n = batch_len(InputKind::InvertedSphere4d, positions, directions)?;
        let sigma = positions
            .chunks_exact(4)
            .map(|p| if p[3] >= self.lo && p[3] <= self.hi { self.sigma } else { 0.0 })
            .collect();
        Ok(FieldOutput {
            sigma,
            color: self.color.repeat(n),
        })
    }
}
