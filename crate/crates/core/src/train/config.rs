use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldArchitecture, InputKind, Variant};
use crate::render::{Parameterization, RenderConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// One Euclidean field over a fixed depth range.
    BoundedNerf,
    /// Foreground field inside the unit sphere, inverted-sphere background.
    Nerfpp,
    /// Density frozen to a unit-sphere shell; only radiance is fitted.
    FixedSphereAmbiguity,
}

impl TrainMode {
    pub const ALL: [TrainMode; 3] = [TrainMode::BoundedNerf, TrainMode::Nerfpp, TrainMode::FixedSphereAmbiguity];

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::BoundedNerf => "bounded_nerf",
            TrainMode::Nerfpp => "nerfpp",
            TrainMode::FixedSphereAmbiguity => "fixed_sphere_ambiguity",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode '{s}'")))
    }
}

/// Network shape shared by every field of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub variant: Variant,
    pub trunk_depth: usize,
    pub trunk_width: usize,
    pub skip_layers: Vec<usize>,
    pub view_branch_depth: usize,
    pub view_branch_width: usize,
    pub k_position: usize,
    /// Defaults to 4 for the asymmetric network and `k_position` for the
    /// vanilla one.
    pub k_direction: Option<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let a = FieldArchitecture::nerf(InputKind::Euclidean3d);
        Self {
            variant: a.variant,
            trunk_depth: a.trunk_depth,
            trunk_width: a.trunk_width,
            skip_layers: a.skip_layers,
            view_branch_depth: a.view_branch_depth,
            view_branch_width: a.view_branch_width,
            k_position: a.k_position,
            k_direction: None,
        }
    }
}

impl NetworkConfig {
    pub fn arch(&self, input_kind: InputKind, position_scale: f64) -> FieldArchitecture {
        let vanilla = self.variant == Variant::VanillaSymmetric;
        FieldArchitecture {
            variant: self.variant,
            trunk_depth: self.trunk_depth,
            trunk_width: self.trunk_width,
            skip_layers: self.skip_layers.clone(),
            view_branch_depth: if vanilla { 0 } else { self.view_branch_depth },
            view_branch_width: if vanilla { 0 } else { self.view_branch_width },
            k_position: self.k_position,
            k_direction: self.k_direction.unwrap_or(if vanilla { self.k_position } else { 4 }),
            input_kind,
            position_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub batch_rays: usize,
    pub iterations: usize,
    pub lr: f64,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Depth range of the bounded modes.
    pub near: f64,
    pub far: f64,
    /// Euclidean positions are scaled by this before encoding (bounded modes).
    pub position_scale: f64,
    pub jitter: bool,
    pub jitter_background: bool,
    /// Use one network per volume for both the coarse and fine passes.
    pub share_coarse_fine: bool,
    /// Test views rendered at each evaluation; 0 means all.
    pub eval_views: usize,
    /// Fill the `seconds` column of the log with wall-clock time.
    pub record_wall_time: bool,
    pub network: NetworkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Nerfpp,
            batch_rays: 2048,
            iterations: 5000,
            lr: 5e-4,
            n_coarse: 128,
            n_fine: 256,
            seed: 0,
            eval_every: 1000,
            near: 0.0,
            far: 2.0,
            position_scale: 1.0,
            jitter: true,
            jitter_background: false,
            share_coarse_fine: false,
            eval_views: 0,
            record_wall_time: false,
            network: NetworkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.batch_rays == 0 {
            return bad("batch_rays must be positive");
        }
        if self.n_coarse == 0 {
            return bad("n_coarse must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("lr must be finite and non-negative");
        }
        if !(self.position_scale.is_finite() && self.position_scale > 0.0) {
            return bad("position_scale must be positive");
        }
        self.render_config().validate()?;
        self.network.arch(InputKind::Euclidean3d, 1.0).validate()
    }

    pub fn render_config(&self) -> RenderConfig {
        let parameterization = match self.mode {
            TrainMode::Nerfpp => Parameterization::NerfPlusPlus,
            TrainMode::BoundedNerf | TrainMode::FixedSphereAmbiguity => Parameterization::Bounded {
                near: self.near,
                far: self.far,
            },
        };
        RenderConfig {
            parameterization,
            n_coarse: self.n_coarse,
            n_fine: self.n_fine,
            jitter: self.jitter,
            jitter_background: self.jitter_background,
        }
    }
}
