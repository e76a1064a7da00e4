//! Scripted comparisons: synthesize a scene, train each variant on it, and
//! tabulate train and test metrics per seed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};

use nerfpp::field::Variant;
use nerfpp::metrics::MetricReport;
use nerfpp::scene::Split;
use nerfpp::train::{fit, TrainConfig, TrainMode};

use crate::commands::{cmd_synth, mean, metrics_csv, score_views, METRICS_FILE};
use crate::config::{ExperimentKind, RunConfig};

pub const REPORT_FILE: &str = "report.csv";
pub const REPORT_HEADER: &str = "experiment,variant,mode,seed,samples_per_ray,train_psnr,train_ssim,test_psnr,test_ssim";

/// One trained configuration in a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub name: String,
    pub config: TrainConfig,
}

/// The arms of `kind`, derived from the base run configuration.
pub fn arms(kind: ExperimentKind, run: &RunConfig) -> anyhow::Result<Vec<Arm>> {
    let base = &run.train;
    let arm = |name: &str, config: TrainConfig| Arm {
        name: name.to_string(),
        config,
    };
    Ok(match kind {
        ExperimentKind::Ambiguity => {
            let mut c = base.clone();
            c.mode = TrainMode::FixedSphereAmbiguity;
            vec![arm(c.mode.name(), c)]
        }
        ExperimentKind::MlpCompare => {
            if base.mode == TrainMode::FixedSphereAmbiguity {
                bail!("mlp_compare needs a free density; use bounded_nerf or nerfpp");
            }
            [Variant::NerfAsymmetric, Variant::VanillaSymmetric]
                .into_iter()
                .map(|v| {
                    let mut c = base.clone();
                    c.network.variant = v;
                    let name = match v {
                        Variant::NerfAsymmetric => "nerf_asymmetric",
                        Variant::VanillaSymmetric => "vanilla_symmetric",
                    };
                    arm(name, c)
                })
                .collect()
        }
        ExperimentKind::ParamCompare => {
            // One Euclidean volume reaching the farthest surface from any
            // camera, with twice the per-volume samples of the two-volume arm.
            let reach = run.scene.scene()?.bounding_radius() + 1.0;
            let mut bounded = base.clone();
            bounded.mode = TrainMode::BoundedNerf;
            bounded.near = 0.0;
            bounded.far = reach;
            bounded.position_scale = 1.0 / reach;
            bounded.n_coarse *= 2;
            bounded.n_fine *= 2;
            let mut nerfpp = base.clone();
            nerfpp.mode = TrainMode::Nerfpp;
            nerfpp.position_scale = 1.0;
            vec![arm("bounded_nerf", bounded), arm("nerfpp", nerfpp)]
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub variant: String,
    pub mode: TrainMode,
    pub seed: u64,
    pub samples_per_ray: usize,
    pub train: MetricReport,
    pub test: MetricReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub experiment: ExperimentKind,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn variants(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.variant.as_str()) {
                names.push(&r.variant);
            }
        }
        names
    }

    pub fn rows_for<'a>(&'a self, variant: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.variant == variant)
    }

    /// Mean train and test metrics of one variant across seeds.
    pub fn mean(&self, variant: &str) -> (MetricReport, MetricReport) {
        let rows: Vec<&ReportRow> = self.rows_for(variant).collect();
        let n = rows.len() as f64;
        let avg = |f: &dyn Fn(&ReportRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        (
            MetricReport {
                psnr: avg(&|r| r.train.psnr),
                ssim: avg(&|r| r.train.ssim),
            },
            MetricReport {
                psnr: avg(&|r| r.test.psnr),
                ssim: avg(&|r| r.test.ssim),
            },
        )
    }

    /// Test PSNR of `a` minus that of `b`, one entry per seed both ran.
    pub fn test_gaps(&self, a: &str, b: &str) -> Vec<(u64, f64)> {
        self.rows_for(a)
            .filter_map(|ra| {
                self.rows_for(b)
                    .find(|rb| rb.seed == ra.seed)
                    .map(|rb| (ra.seed, ra.test.psnr - rb.test.psnr))
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\n");
        let exp = self.experiment.name();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{exp},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                r.variant, r.mode, r.seed, r.samples_per_ray, r.train.psnr, r.train.ssim, r.test.psnr, r.test.ssim
            );
        }
        for v in self.variants() {
            let first = self.rows_for(v).next().expect("variant has rows");
            let (train, test) = self.mean(v);
            let _ = writeln!(
                s,
                "{exp},{v},{},mean,{},{:.6},{:.6},{:.6},{:.6}",
                first.mode, first.samples_per_ray, train.psnr, train.ssim, test.psnr, test.ssim
            );
        }
        s
    }
}

/// Runs `kind` for `run.repeats` seeds and writes `report.csv` under `out`.
///
/// Layout: `out/seed_<s>/data` holds the dataset, `out/seed_<s>/<variant>`
/// the checkpoint, training log, test metrics and comparison images.
pub fn cmd_experiment(kind: ExperimentKind, run: &RunConfig, out: &Path) -> anyhow::Result<Report> {
    let arms = arms(kind, run)?;
    for a in &arms {
        a.config
            .validate()
            .with_context(|| format!("{} configuration", a.name))?;
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut rows = Vec::new();
    for rep in 0..run.repeats {
        let seed = run.seed() + rep as u64;
        let seed_dir = out.join(format!("seed_{seed}"));
        let mut synth = run.clone();
        synth.seed = Some(seed);
        let dataset = cmd_synth(&synth, &seed_dir.join("data"))?;
        let train_views = dataset.indices(Split::Train);
        let test_views = dataset.indices(Split::Test);

        for a in &arms {
            log::info!("{kind}: training {} with seed {seed}", a.name);
            let mut config = a.config.clone();
            config.seed = seed;
            let dir = seed_dir.join(&a.name);
            let (trainer, _) = fit(&dataset, config.clone(), Some(&dir))?;
            let train = score_views(&trainer, &dataset, Split::Train, &train_views, None)?;
            let test = score_views(&trainer, &dataset, Split::Test, &test_views, Some(&dir))?;
            fs::write(dir.join(METRICS_FILE), metrics_csv(Split::Test, &test))
                .with_context(|| format!("writing metrics in {}", dir.display()))?;
            let row = ReportRow {
                variant: a.name.clone(),
                mode: config.mode,
                seed,
                samples_per_ray: config.render_config().samples_per_ray(),
                train: mean(&train),
                test: mean(&test),
            };
            log::info!(
                "{kind}: {} seed {seed}: train {:.2} dB, test {:.2} dB",
                a.name,
                row.train.psnr,
                row.test.psnr
            );
            rows.push(row);
        }
    }

    let report = Report { experiment: kind, rows };
    let path = out.join(REPORT_FILE);
    fs::write(&path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    Ok(report)
}
