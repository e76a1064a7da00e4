use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

use nerfpp::field::checkpoint;
use nerfpp::metrics::MetricReport;
use nerfpp::scene::{load_dataset, save_dataset, synthesize, PosedDataset, Split};
use nerfpp::train::{evaluate_views, fit, TrainLog, TrainMode, Trainer};
use nerfpp::Error;

use crate::config::RunConfig;

pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_HEADER: &str = "view,split,psnr,ssim";

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "test",
    }
}

/// Renders the configured scene and writes it as a dataset under `out`.
pub fn cmd_synth(config: &RunConfig, out: &Path) -> anyhow::Result<PosedDataset> {
    if config.scene.n_test == 0 {
        log::warn!("n_test is 0; the dataset has no test views");
    }
    let dataset = synthesize(&config.scene, config.seed())?;
    save_dataset(&dataset, out)?;
    log::info!("wrote {} views to {}", dataset.len(), out.display());
    Ok(dataset)
}

/// Trains on the dataset in `data`; the checkpoint and `log.csv` go to `out`.
pub fn cmd_train(config: &RunConfig, data: &Path, out: &Path) -> anyhow::Result<(Trainer, TrainLog)> {
    let dataset = load_dataset(data)?;
    let (trainer, log) = fit(&dataset, config.train.clone(), Some(out))?;
    if let Some(last) = log.last() {
        log::info!("final test PSNR {:.3} dB", last.test_psnr);
    }
    Ok((trainer, log))
}

/// Restores a trainer, optionally insisting on a training mode.
pub fn load_trainer(path: &Path, mode: Option<TrainMode>) -> anyhow::Result<Trainer> {
    let ckpt = checkpoint::load(path)?;
    let trainer = Trainer::from_checkpoint(ckpt)?;
    if let Some(mode) = mode {
        if trainer.config.mode != mode {
            return Err(Error::ArchitectureMismatch(format!(
                "checkpoint was trained in {} mode, not {mode}",
                trainer.config.mode
            ))
            .into());
        }
    }
    Ok(trainer)
}

/// Renders every view of `split` (all views when `None`) to `out` as PNG,
/// plus an unquantized `.f64` dump of each view when `raw` is set.
pub fn cmd_render(
    trainer: &Trainer,
    dataset: &PosedDataset,
    split: Option<Split>,
    raw: bool,
    out: &Path,
) -> anyhow::Result<Vec<PathBuf>> {
    create_dir(out)?;
    let mut written = Vec::new();
    for (i, camera) in dataset.cameras.iter().enumerate() {
        let s = dataset.splits[i];
        if split.is_some_and(|want| want != s) {
            continue;
        }
        let stem = format!("{}_{i:03}", split_name(s));
        let img = trainer.render_view(camera)?;
        let path = out.join(format!("{stem}.png"));
        img.write_png(&path)?;
        if raw {
            img.write_raw(&out.join(format!("{stem}.f64")))?;
        }
        written.push(path);
    }
    Ok(written)
}

/// Scores `views` of one split, writing a side-by-side PNG (prediction left,
/// reference right) per view into `out`.
pub fn score_views(
    trainer: &Trainer,
    dataset: &PosedDataset,
    split: Split,
    views: &[usize],
    out: Option<&Path>,
) -> anyhow::Result<Vec<(usize, MetricReport)>> {
    let scored = evaluate_views(trainer, dataset, views)?;
    let mut rows = Vec::with_capacity(views.len());
    for (&i, (img, report)) in views.iter().zip(scored) {
        if let Some(dir) = out {
            let path = dir.join(format!("{}_{i:03}.png", split_name(split)));
            img.side_by_side(&dataset.images[i]).write_png(&path)?;
        }
        rows.push((i, report));
    }
    Ok(rows)
}

pub fn mean(rows: &[(usize, MetricReport)]) -> MetricReport {
    let n = rows.len() as f64;
    MetricReport {
        psnr: rows.iter().map(|(_, r)| r.psnr).sum::<f64>() / n,
        ssim: rows.iter().map(|(_, r)| r.ssim).sum::<f64>() / n,
    }
}

pub fn metrics_csv(split: Split, rows: &[(usize, MetricReport)]) -> String {
    let name = split_name(split);
    let mut s = format!("{METRICS_HEADER}\n");
    for (i, r) in rows {
        let _ = writeln!(s, "{i},{name},{:.6},{:.6}", r.psnr, r.ssim);
    }
    let m = mean(rows);
    let _ = writeln!(s, "mean,{name},{:.6},{:.6}", m.psnr, m.ssim);
    s
}

/// Per-view test metrics and their mean in `out/metrics.csv`, plus one
/// comparison PNG per test view.
pub fn cmd_eval(trainer: &Trainer, dataset: &PosedDataset, out: &Path) -> anyhow::Result<MetricReport> {
    create_dir(out)?;
    let views = dataset.indices(Split::Test);
    if views.is_empty() {
        log::warn!("dataset has no test views");
    }
    let rows = score_views(trainer, dataset, Split::Test, &views, Some(out))?;
    let path = out.join(METRICS_FILE);
    fs::write(&path, metrics_csv(Split::Test, &rows)).with_context(|| format!("writing {}", path.display()))?;
    let m = mean(&rows);
    log::info!("test PSNR {:.3} dB, SSIM {:.4} over {} views", m.psnr, m.ssim, rows.len());
    Ok(m)
}
