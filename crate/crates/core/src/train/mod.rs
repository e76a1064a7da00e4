//! Stochastic fitting of radiance fields to posed images.

mod config;
mod record;

pub use config::{NetworkConfig, TrainConfig, TrainMode};
pub use record::{LogRecord, TrainLog};

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::checkpoint::{self, Checkpoint, CheckpointModel};
use crate::field::{adam_step, AdamState, FieldModel, FrozenOpacity, GradientSet, InputKind};
use crate::geometry::Ray;
use crate::image::Image;
use crate::metrics::{self, psnr_from_mse, MetricReport};
use crate::render::{render_batch, render_image, FieldSlots, Pass, RenderConfig};
use crate::scene::{PosedDataset, Split};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOG_FILE: &str = "log.csv";

const FG_COARSE: &str = "fg_coarse";
const FG_FINE: &str = "fg_fine";
const BG_COARSE: &str = "bg_coarse";
const BG_FINE: &str = "bg_fine";

/// The networks of one run, in checkpoint order.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    pub roles: Vec<String>,
    pub models: Vec<FieldModel>,
}

impl FieldSet {
    pub fn init(config: &TrainConfig) -> Result<Self> {
        let net = &config.network;
        let fine = config.n_fine > 0 && !config.share_coarse_fine;
        let mut roles = vec![FG_COARSE];
        if fine {
            roles.push(FG_FINE);
        }
        if config.mode == TrainMode::Nerfpp {
            roles.push(BG_COARSE);
            if fine {
                roles.push(BG_FINE);
            }
        }
        // Distinct, reproducible initial weights per role.
        let mut seeds = ChaCha8Rng::seed_from_u64(config.seed);
        let mut models = Vec::with_capacity(roles.len());
        for role in &roles {
            let seed = seeds.random::<u64>();
            let model = if role.starts_with("bg") {
                FieldModel::init(net.arch(InputKind::InvertedSphere4d, 1.0), seed)?
            } else {
                let scale = match config.mode {
                    TrainMode::Nerfpp => 1.0,
                    _ => config.position_scale,
                };
                FieldModel::init(net.arch(InputKind::Euclidean3d, scale), seed)?
            };
            models.push(match config.mode {
                TrainMode::FixedSphereAmbiguity => model.with_frozen_opacity(FrozenOpacity::unit_sphere_shell()),
                _ => model,
            });
        }
        Ok(Self {
            roles: roles.into_iter().map(String::from).collect(),
            models,
        })
    }

    fn index(&self, role: &str) -> Option<usize> {
        self.roles.iter().position(|r| r == role)
    }

    pub fn model(&self, role: &str) -> Option<&FieldModel> {
        self.index(role).map(|i| &self.models[i])
    }

    /// Model indices used by the coarse and fine passes of each volume.
    fn slot_indices(&self) -> ([usize; 2], Option<[usize; 2]>) {
        let fg_c = self.index(FG_COARSE).expect("foreground model");
        let fg = [fg_c, self.index(FG_FINE).unwrap_or(fg_c)];
        let bg = self
            .index(BG_COARSE)
            .map(|c| [c, self.index(BG_FINE).unwrap_or(c)]);
        (fg, bg)
    }

    pub fn slots(&self) -> FieldSlots<'_> {
        let (fg, bg) = self.slot_indices();
        FieldSlots {
            fg: fg.map(|i| &self.models[i] as &dyn crate::field::RadianceField),
            bg: bg.map(|b| b.map(|i| &self.models[i] as &dyn crate::field::RadianceField)),
        }
    }
}

/// Mean over rays and channels of the squared color difference.
pub fn mse_loss(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() || !predicted.len().is_multiple_of(3) {
        return Err(Error::ShapeMismatch(format!(
            "{} predicted vs {} target values",
            predicted.len(),
            target.len()
        )));
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = predicted.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / predicted.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Coarse plus fine loss.
    pub loss: f64,
    /// Loss of the reported (fine, if any) pass.
    pub final_mse: f64,
}

/// Models, optimizer moments and progress of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub config: TrainConfig,
    pub fields: FieldSet,
    pub adam: Vec<AdamState>,
    pub iteration: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let fields = FieldSet::init(&config)?;
        let adam = fields.models.iter().map(AdamState::new).collect();
        Ok(Self {
            config,
            fields,
            adam,
            iteration: 0,
        })
    }

    pub fn render_config(&self) -> RenderConfig {
        self.config.render_config()
    }

    /// Random stream for one iteration; independent of how the run was split
    /// across resumes.
    pub fn iteration_rng(&self, iteration: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(iteration as u64 + 1);
        rng
    }

    /// Loss and parameter gradients for one batch, without updating.
    pub fn loss_and_gradients<R: Rng + ?Sized>(
        &self,
        rays: &[Ray],
        targets: &[f64],
        rng: &mut R,
    ) -> Result<(StepStats, Vec<GradientSet>)> {
        if targets.len() != rays.len() * 3 {
            return Err(Error::ShapeMismatch(format!(
                "{} rays with {} target values",
                rays.len(),
                targets.len()
            )));
        }
        let tape = render_batch(self.fields.slots(), rays, &self.render_config(), Some(rng))?;
        let mut grads: Vec<GradientSet> = self.fields.models.iter().map(GradientSet::zeros_like).collect();
        let (fg_idx, bg_idx) = self.fields.slot_indices();
        let scale = 2.0 / targets.len() as f64;
        let mut loss = 0.0;
        let mut final_mse = 0.0;
        let passes = std::iter::once((0, &tape.coarse)).chain(tape.fine.as_ref().map(|p| (1, p)));
        for (slot, pass) in passes {
            let mse = mse_loss(&pass.color, targets)?;
            loss += mse;
            final_mse = mse;
            let g: Vec<f64> = pass.color.iter().zip(targets).map(|(c, t)| scale * (c - t)).collect();
            self.accumulate(pass, &g, fg_idx[slot], bg_idx.map(|b| b[slot]), &mut grads)?;
        }
        Ok((StepStats { loss, final_mse }, grads))
    }

    fn accumulate(
        &self,
        pass: &Pass,
        g: &[f64],
        fg: usize,
        bg: Option<usize>,
        grads: &mut [GradientSet],
    ) -> Result<()> {
        let pg = pass.backward(g);
        let trace = pass.fg.trace.as_ref().expect("trainable fields record traces");
        self.fields.models[fg].backward_batch_into(trace, &pg.fg.0, &pg.fg.1, &mut grads[fg])?;
        if let (Some((ds, dc)), Some(bg_pass), Some(bg)) = (&pg.bg, &pass.bg, bg) {
            let trace = bg_pass.trace.as_ref().expect("trainable fields record traces");
            self.fields.models[bg].backward_batch_into(trace, ds, dc, &mut grads[bg])?;
        }
        Ok(())
    }

    /// One optimizer step on a batch of rays and target colors.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rays: &[Ray], targets: &[f64], rng: &mut R) -> Result<StepStats> {
        let (stats, grads) = match self.loss_and_gradients(rays, targets, rng) {
            // Only non-finite coarse weights make importance sampling fail here.
            Err(Error::DegenerateBins(detail)) => {
                return Err(Error::NonFiniteLoss {
                    iteration: self.iteration,
                    detail: format!("coarse pass produced unusable weights ({detail})"),
                })
            }
            other => other?,
        };
        if !stats.loss.is_finite() || !grads.iter().all(GradientSet::is_finite) {
            return Err(Error::NonFiniteLoss {
                iteration: self.iteration,
                detail: format!(
                    "loss {} (final pass mse {}), largest gradient {}",
                    stats.loss,
                    stats.final_mse,
                    grads.iter().map(GradientSet::max_abs).fold(0.0, f64::max)
                ),
            });
        }
        for ((model, g), state) in self.fields.models.iter_mut().zip(&grads).zip(&mut self.adam) {
            adam_step(model, g, state, self.config.lr)?;
        }
        self.iteration += 1;
        Ok(stats)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            seed: self.config.seed,
            iteration: self.iteration,
            models: self
                .fields
                .roles
                .iter()
                .zip(&self.fields.models)
                .zip(&self.adam)
                .map(|((role, model), adam)| CheckpointModel {
                    role: role.clone(),
                    model: model.clone(),
                    adam: Some(adam.clone()),
                })
                .collect(),
            meta: serde_json::to_value(&self.config).expect("config serializes"),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let config: TrainConfig = serde_json::from_value(ckpt.meta.clone())
            .map_err(|e| Error::MalformedCheckpoint(format!("training configuration: {e}")))?;
        let expected = FieldSet::init(&config)?;
        if expected.roles.len() != ckpt.models.len() {
            return Err(Error::ArchitectureMismatch(format!(
                "{} mode expects models {:?}",
                config.mode, expected.roles
            )));
        }
        let mut roles = Vec::new();
        let mut models = Vec::new();
        let mut adam = Vec::new();
        for (want, m) in expected.models.iter().zip(ckpt.models) {
            if m.model.arch != want.arch || m.model.frozen_opacity != want.frozen_opacity {
                return Err(Error::ArchitectureMismatch(format!(
                    "checkpoint model '{}' does not match the {} configuration",
                    m.role, config.mode
                )));
            }
            adam.push(m.adam.unwrap_or_else(|| AdamState::new(&m.model)));
            roles.push(m.role);
            models.push(m.model);
        }
        if roles != expected.roles {
            return Err(Error::ArchitectureMismatch(format!(
                "checkpoint roles {roles:?}, expected {:?}",
                expected.roles
            )));
        }
        Ok(Self {
            config,
            fields: FieldSet { roles, models },
            adam,
            iteration: ckpt.iteration,
        })
    }

    pub fn render_view(&self, camera: &crate::scene::Camera) -> Result<Image> {
        render_image(camera, &self.render_config(), self.fields.slots())
    }
}

/// Every training pixel as a ray plus its target color.
pub struct RayPool {
    pub rays: Vec<Ray>,
    pub colors: Vec<f64>,
}

impl RayPool {
    pub fn from_split(dataset: &PosedDataset, split: Split) -> Self {
        let mut rays = Vec::new();
        let mut colors = Vec::new();
        for i in dataset.indices(split) {
            rays.extend(dataset.cameras[i].rays());
            colors.extend_from_slice(&dataset.images[i].data);
        }
        Self { rays, colors }
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    /// Uniform draw of `n` rays with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<Ray>, Vec<f64>) {
        let mut rays = Vec::with_capacity(n);
        let mut colors = Vec::with_capacity(3 * n);
        for _ in 0..n {
            let i = rng.random_range(0..self.rays.len());
            rays.push(self.rays[i]);
            colors.extend_from_slice(&self.colors[3 * i..3 * i + 3]);
        }
        (rays, colors)
    }
}

/// Renders the given views and scores them against the dataset images.
pub fn evaluate_views(trainer: &Trainer, dataset: &PosedDataset, views: &[usize]) -> Result<Vec<(Image, MetricReport)>> {
    views
        .iter()
        .map(|&i| {
            let img = trainer.render_view(&dataset.cameras[i])?;
            let report = metrics::evaluate(&img, &dataset.images[i])?;
            Ok((img, report))
        })
        .collect()
}

fn mean_report(reports: &[MetricReport]) -> MetricReport {
    if reports.is_empty() {
        return MetricReport {
            psnr: f64::NAN,
            ssim: f64::NAN,
        };
    }
    let n = reports.len() as f64;
    MetricReport {
        psnr: reports.iter().map(|r| r.psnr).sum::<f64>() / n,
        ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
    }
}

/// Mean PSNR and SSIM over `views`.
pub fn mean_metrics(trainer: &Trainer, dataset: &PosedDataset, views: &[usize]) -> Result<MetricReport> {
    let reports: Vec<MetricReport> = evaluate_views(trainer, dataset, views)?.into_iter().map(|(_, r)| r).collect();
    Ok(mean_report(&reports))
}

/// Train from scratch; see [`fit_from`].
pub fn fit(dataset: &PosedDataset, config: TrainConfig, out: Option<&Path>) -> Result<(Trainer, TrainLog)> {
    fit_from(Trainer::new(config)?, dataset, out)
}

/// Continue `trainer` until `config.iterations`, evaluating every
/// `eval_every` iterations and at the end. With `out`, the log and a
/// checkpoint are written there at every evaluation.
pub fn fit_from(mut trainer: Trainer, dataset: &PosedDataset, out: Option<&Path>) -> Result<(Trainer, TrainLog)> {
    let pool = RayPool::from_split(dataset, Split::Train);
    if pool.is_empty() && trainer.iteration < trainer.config.iterations {
        return Err(Error::InvalidConfig("dataset has no training views".into()));
    }
    let mut test_views = dataset.indices(Split::Test);
    if trainer.config.eval_views > 0 {
        test_views.truncate(trainer.config.eval_views);
    }
    // Fail before training rather than at the first evaluation.
    let w = metrics::SSIM_WINDOW;
    if test_views.iter().any(|&i| dataset.images[i].width < w || dataset.images[i].height < w) {
        return Err(Error::ImageTooSmall(w));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut log = TrainLog::default();
    let start = Instant::now();
    let (mut loss_sum, mut mse_sum, mut steps) = (0.0, 0.0, 0usize);
    while trainer.iteration < trainer.config.iterations {
        let mut rng = trainer.iteration_rng(trainer.iteration);
        let (rays, colors) = pool.sample(trainer.config.batch_rays, &mut rng);
        let stats = trainer.train_step(&rays, &colors, &mut rng)?;
        loss_sum += stats.loss;
        mse_sum += stats.final_mse;
        steps += 1;

        let it = trainer.iteration;
        if it.is_multiple_of(trainer.config.eval_every) || it == trainer.config.iterations {
            let test = mean_metrics(&trainer, dataset, &test_views)?;
            let record = LogRecord {
                iteration: it,
                loss: loss_sum / steps as f64,
                train_psnr: psnr_from_mse(mse_sum / steps as f64),
                test_psnr: test.psnr,
                test_ssim: test.ssim,
                seconds: start.elapsed().as_secs_f64(),
            };
            log::info!(
                "iter {it}: loss {:.5} train {:.2} dB test {:.2} dB ssim {:.3}",
                record.loss,
                record.train_psnr,
                record.test_psnr,
                record.test_ssim
            );
            log.records.push(record);
            (loss_sum, mse_sum, steps) = (0.0, 0.0, 0);
            if let Some(dir) = out {
                checkpoint::save(&trainer.checkpoint(), &dir.join(CHECKPOINT_FILE))?;
                log.write_csv(&dir.join(LOG_FILE), trainer.config.record_wall_time)?;
            }
        }
    }
    if let Some(dir) = out {
        if log.records.is_empty() {
            checkpoint::save(&trainer.checkpoint(), &dir.join(CHECKPOINT_FILE))?;
            log.write_csv(&dir.join(LOG_FILE), trainer.config.record_wall_time)?;
        }
    }
    Ok((trainer, log))
}

#[cfg(test)]
mod tests;
