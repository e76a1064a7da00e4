use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use nerfpp::scene::SynthSpec;
use nerfpp::train::{TrainConfig, TrainMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Frozen unit-sphere density; only radiance is fitted.
    Ambiguity,
    /// Asymmetric against vanilla MLP with free density.
    MlpCompare,
    /// Scene-wide bounding volume against the inverted-sphere split.
    ParamCompare,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 3] = [
        ExperimentKind::Ambiguity,
        ExperimentKind::MlpCompare,
        ExperimentKind::ParamCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Ambiguity => "ambiguity",
            ExperimentKind::MlpCompare => "mlp_compare",
            ExperimentKind::ParamCompare => "param_compare",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment '{s}' (expected ambiguity, mlp_compare or param_compare)"))
    }
}

/// Everything a command needs, read from one TOML file.
///
/// ```toml
/// experiment = "mlp_compare"
/// seed = 1
/// repeats = 3
///
/// [scene]
/// n_train = 20
/// width = 32
/// height = 32
///
/// [train]
/// mode = "bounded_nerf"
/// iterations = 2000
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<ExperimentKind>,
    pub out: Option<PathBuf>,
    /// Seeds the scene poses and the first training run; replaces `train.seed`.
    pub seed: Option<u64>,
    /// Experiments run seeds `seed, seed + 1, ...` this many times.
    pub repeats: usize,
    pub scene: SynthSpec,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            out: None,
            seed: None,
            repeats: 1,
            scene: SynthSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<TrainMode>,
    pub iterations: Option<usize>,
    pub batch_rays: Option<usize>,
    pub n_coarse: Option<usize>,
    pub n_fine: Option<usize>,
    pub lr: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Config from an optional file, with `overrides` applied and validated.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> anyhow::Result<Self> {
        let mut config = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        let t = &mut self.train;
        if let Some(seed) = self.seed {
            t.seed = seed;
        }
        if let Some(mode) = o.mode {
            t.mode = mode;
        }
        if let Some(n) = o.iterations {
            t.iterations = n;
        }
        if let Some(n) = o.batch_rays {
            t.batch_rays = n;
        }
        if let Some(n) = o.n_coarse {
            t.n_coarse = n;
        }
        if let Some(n) = o.n_fine {
            t.n_fine = n;
        }
        if let Some(lr) = o.lr {
            t.lr = lr;
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.repeats == 0 {
            bail!("repeats must be positive");
        }
        self.scene.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    pub fn out_dir(&self) -> anyhow::Result<&Path> {
        match &self.out {
            Some(p) => Ok(p),
            None => bail!("no output directory (pass --out or set `out` in the config)"),
        }
    }
}
