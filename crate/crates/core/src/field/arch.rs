use serde::{Deserialize, Serialize};

use super::encoding::encoded_len;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Direction enters after the density head, through a short view branch.
    NerfAsymmetric,
    /// Color comes from a separate MLP fed `[gamma(x), gamma(d)]` at its first layer.
    VanillaSymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Euclidean3d,
    /// `(x', y', z', 1/r)` for the outer volume.
    InvertedSphere4d,
}

impl InputKind {
    pub fn position_dim(self) -> usize {
        match self {
            InputKind::Euclidean3d => 3,
            InputKind::InvertedSphere4d => 4,
        }
    }
}

pub const MAX_DEPTH: usize = 64;
pub const MAX_WIDTH: usize = 4096;
pub const MAX_FREQUENCIES: usize = 32;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldArchitecture {
    pub variant: Variant,
    pub trunk_depth: usize,
    pub trunk_width: usize,
    /// Trunk layers (index >= 1) that also receive the encoded position.
    pub skip_layers: Vec<usize>,
    pub view_branch_depth: usize,
    pub view_branch_width: usize,
    pub k_position: usize,
    pub k_direction: usize,
    pub input_kind: InputKind,
    /// Euclidean positions are multiplied by this before encoding.
    #[serde(default = "one")]
    pub position_scale: f64,
}

impl FieldArchitecture {
    /// Desk-scale asymmetric network: 4x64 trunk, skip at 2, 1x32 view branch,
    /// gamma^10 on position and gamma^4 on direction.
    pub fn nerf(input_kind: InputKind) -> Self {
        Self {
            variant: Variant::NerfAsymmetric,
            trunk_depth: 4,
            trunk_width: 64,
            skip_layers: vec![2],
            view_branch_depth: 1,
            view_branch_width: 32,
            k_position: 10,
            k_direction: 4,
            input_kind,
            position_scale: 1.0,
        }
    }

    /// Symmetric counterpart: direction encoded at the position frequency and
    /// fed to the first layer of the color network.
    pub fn vanilla(input_kind: InputKind) -> Self {
        Self {
            variant: Variant::VanillaSymmetric,
            view_branch_depth: 0,
            view_branch_width: 0,
            k_direction: 10,
            ..Self::nerf(input_kind)
        }
    }

    /// Rebuilds the architecture as the other variant with the same trunk.
    pub fn with_variant(&self, variant: Variant) -> Self {
        match variant {
            Variant::NerfAsymmetric if self.variant == Variant::VanillaSymmetric => Self {
                variant,
                view_branch_depth: 1,
                view_branch_width: self.trunk_width / 2,
                k_direction: 4,
                ..self.clone()
            },
            Variant::VanillaSymmetric if self.variant == Variant::NerfAsymmetric => Self {
                variant,
                view_branch_depth: 0,
                view_branch_width: 0,
                k_direction: self.k_position,
                ..self.clone()
            },
            _ => self.clone(),
        }
    }

    pub fn position_dim(&self) -> usize {
        self.input_kind.position_dim()
    }

    pub fn encoded_position_dim(&self) -> usize {
        encoded_len(self.position_dim(), self.k_position)
    }

    pub fn encoded_direction_dim(&self) -> usize {
        encoded_len(3, self.k_direction)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArchitecture(msg));
        if self.trunk_depth == 0 || self.trunk_width == 0 {
            return bad("trunk depth and width must be positive".into());
        }
        if self.trunk_depth.max(self.view_branch_depth) > MAX_DEPTH
            || self.trunk_width.max(self.view_branch_width) > MAX_WIDTH
            || self.k_position.max(self.k_direction) > MAX_FREQUENCIES
        {
            return bad(format!(
                "sizes exceed depth {MAX_DEPTH}, width {MAX_WIDTH} or {MAX_FREQUENCIES} frequencies"
            ));
        }
        if let Some(&s) = self
            .skip_layers
            .iter()
            .find(|&&s| s == 0 || s >= self.trunk_depth)
        {
            return bad(format!(
                "skip layer {s} outside 1..{}",
                self.trunk_depth
            ));
        }
        match self.variant {
            Variant::NerfAsymmetric => {
                if self.view_branch_depth > 0 && self.view_branch_width == 0 {
                    return bad("view branch width must be positive".into());
                }
            }
            Variant::VanillaSymmetric => {
                if self.view_branch_depth != 0 {
                    return bad("vanilla variant has no view branch".into());
                }
            }
        }
        if !(self.position_scale.is_finite() && self.position_scale > 0.0) {
            return bad(format!("position scale {}", self.position_scale));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        FieldArchitecture::nerf(InputKind::Euclidean3d).validate().unwrap();
        FieldArchitecture::vanilla(InputKind::InvertedSphere4d)
            .validate()
            .unwrap();
    }

    #[test]
    fn encoded_dims() {
        let a = FieldArchitecture::nerf(InputKind::Euclidean3d);
        assert_eq!(a.encoded_position_dim(), 66);
        assert_eq!(a.encoded_direction_dim(), 30);
        let b = FieldArchitecture::nerf(InputKind::InvertedSphere4d);
        assert_eq!(b.encoded_position_dim(), 88);
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut a = FieldArchitecture::nerf(InputKind::Euclidean3d);
        a.trunk_depth = 0;
        assert!(a.validate().is_err());
        let mut a = FieldArchitecture::nerf(InputKind::Euclidean3d);
        a.skip_layers = vec![4];
        assert!(a.validate().is_err());
        let mut a = FieldArchitecture::vanilla(InputKind::Euclidean3d);
        a.view_branch_depth = 1;
        assert!(a.validate().is_err());
        let mut a = FieldArchitecture::nerf(InputKind::Euclidean3d);
        a.trunk_width = usize::MAX;
        assert!(a.validate().is_err());
        let mut a = FieldArchitecture::nerf(InputKind::Euclidean3d);
        a.k_direction = 1000;
        assert!(a.validate().is_err());
    }

    #[test]
    fn variant_swap_keeps_trunk() {
        let a = FieldArchitecture::nerf(InputKind::Euclidean3d);
        let v = a.with_variant(Variant::VanillaSymmetric);
        v.validate().unwrap();
        assert_eq!(v.trunk_width, a.trunk_width);
        assert_eq!(v.k_direction, a.k_position);
    }
}
