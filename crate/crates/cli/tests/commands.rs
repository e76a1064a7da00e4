use std::fs;
use std::path::Path;
use std::process::Command;

use nerfpp::metrics;
use nerfpp::render::render_outputs;
use nerfpp::scene::{load_dataset, Split};
use nerfpp::train::{TrainMode, CHECKPOINT_FILE, LOG_FILE};
use nerfpp::Error;
use nerfpp_cli::experiment::{REPORT_FILE, REPORT_HEADER};
use nerfpp_cli::{cmd_eval, cmd_experiment, cmd_render, cmd_synth, cmd_train, load_trainer};
use nerfpp_cli::{ExperimentKind, Overrides, RunConfig};

const TINY: &str = r#"
[scene]
n_train = 4
n_test = 2
width = 12
height = 12
oracle_samples = 256

[train]
mode = "nerfpp"
iterations = 4
eval_every = 2
batch_rays = 16
n_coarse = 8
n_fine = 4
lr = 0.005

[train.network]
trunk_depth = 2
trunk_width = 16
skip_layers = [1]
view_branch_depth = 1
view_branch_width = 8
k_position = 3
"#;

fn tiny() -> RunConfig {
    RunConfig::parse(TINY).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nerfpp"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, TINY).unwrap();
    path
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let overrides = Overrides {
        seed: Some(9),
        mode: Some(TrainMode::BoundedNerf),
        iterations: Some(11),
        lr: Some(0.25),
        ..Overrides::default()
    };
    let c = RunConfig::resolve(Some(&write_config(dir.path())), &overrides).unwrap();
    assert_eq!(c.train.seed, 9);
    assert_eq!(c.train.mode, TrainMode::BoundedNerf);
    assert_eq!(c.train.iterations, 11);
    assert_eq!(c.train.lr, 0.25);
    assert_eq!(c.train.batch_rays, 16);
    assert_eq!(c.scene.width, 12);
}

#[test]
fn config_rejects_unknown_keys_and_bad_values() {
    assert!(RunConfig::parse("colour = 3").is_err());
    assert!(RunConfig::parse("[train]\nmode = \"nerf\"").is_err());
    let mut c = tiny();
    c.train.batch_rays = 0;
    assert!(c.validate().is_err());
}

#[test]
fn synth_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny();
    c.seed = Some(4);
    cmd_synth(&c, &dir.path().join("a")).unwrap();
    cmd_synth(&c, &dir.path().join("b")).unwrap();
    let a = fs::read(dir.path().join("a/manifest.json")).unwrap();
    let b = fs::read(dir.path().join("b/manifest.json")).unwrap();
    assert_eq!(a, b);
    let data = load_dataset(&dir.path().join("a")).unwrap();
    assert_eq!(data.indices(Split::Train).len(), 4);
    assert_eq!(data.indices(Split::Test).len(), 2);
}

#[test]
fn fifty_view_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny();
    c.scene.n_train = 50;
    c.scene.n_test = 0;
    c.scene.width = 4;
    c.scene.height = 4;
    let data = cmd_synth(&c, dir.path()).unwrap();
    assert_eq!(data.indices(Split::Train).len(), 50);
    assert!(data.indices(Split::Test).is_empty());
    assert_eq!(load_dataset(dir.path()).unwrap().manifest(), data.manifest());
}

#[test]
fn oracle_images_score_perfectly_against_themselves() {
    let dir = tempfile::tempdir().unwrap();
    let data = cmd_synth(&tiny(), dir.path()).unwrap();
    for img in &data.images {
        let r = metrics::evaluate(img, img).unwrap();
        assert_eq!(r.psnr, metrics::PSNR_CAP);
        assert!((r.ssim - 1.0).abs() < 1e-12);
    }
}

#[test]
fn train_eval_render_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let run_dir = dir.path().join("run");
    let c = tiny();
    cmd_synth(&c, &data_dir).unwrap();
    let (_, log) = cmd_train(&c, &data_dir, &run_dir).unwrap();
    assert_eq!(log.records.len(), 2);
    assert!(log.last().unwrap().test_psnr.is_finite());
    let csv = fs::read_to_string(run_dir.join(LOG_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let ckpt = run_dir.join(CHECKPOINT_FILE);
    let trainer = load_trainer(&ckpt, Some(TrainMode::Nerfpp)).unwrap();
    let dataset = load_dataset(&data_dir).unwrap();
    let eval_dir = dir.path().join("eval");
    let mean = cmd_eval(&trainer, &dataset, &eval_dir).unwrap();
    assert!(mean.psnr.is_finite());
    let metrics = fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    // Header, one row per test view, and the mean.
    assert_eq!(metrics.lines().count(), 1 + 2 + 1);
    assert!(metrics.lines().last().unwrap().starts_with("mean,test,"));
    let png = nerfpp::image::load_png(&eval_dir.join("test_002.png")).unwrap();
    assert_eq!((png.width(), png.height()), (24, 12));

    // The composite identity holds for every pixel of an eval render.
    for &i in &dataset.indices(Split::Test) {
        let outs = render_outputs(&dataset.cameras[i], &trainer.render_config(), trainer.fields.slots()).unwrap();
        for o in outs {
            for k in 0..3 {
                let expected = o.fg_color[k] + o.residual_transmittance * o.bg_color[k];
                assert!((o.color[k] - expected).abs() <= 1e-12);
            }
        }
    }

    let render_dir = dir.path().join("render");
    let rendered = cmd_render(&trainer, &dataset, Some(Split::Test), true, &render_dir).unwrap();
    assert_eq!(rendered.len(), 2);
    let raw = nerfpp::image::Image::read_raw(&render_dir.join("test_005.f64")).unwrap();
    assert_eq!(raw, trainer.render_view(&dataset.cameras[5]).unwrap());

    let err = load_trainer(&ckpt, Some(TrainMode::BoundedNerf)).unwrap_err();
    assert!(matches!(err.downcast_ref::<Error>(), Some(Error::ArchitectureMismatch(_))));
}

#[test]
fn experiment_reports_list_their_variants() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny();
    c.train.iterations = 2;
    c.train.mode = TrainMode::BoundedNerf;
    c.train.far = 1.8;
    let expected = [
        (ExperimentKind::Ambiguity, vec!["fixed_sphere_ambiguity"]),
        (ExperimentKind::MlpCompare, vec!["nerf_asymmetric", "vanilla_symmetric"]),
        (ExperimentKind::ParamCompare, vec!["bounded_nerf", "nerfpp"]),
    ];
    for (kind, variants) in expected {
        let out = dir.path().join(kind.name());
        let report = cmd_experiment(kind, &c, &out).unwrap();
        assert_eq!(report.variants(), variants);
        let csv = fs::read_to_string(out.join(REPORT_FILE)).unwrap();
        assert_eq!(csv.lines().next().unwrap(), REPORT_HEADER);
        // One row per variant and seed, then one mean row per variant.
        assert_eq!(csv.lines().count(), 1 + 2 * variants.len());
        assert!(out.join("seed_0/data/manifest.json").exists());
    }
    let param = cmd_experiment(ExperimentKind::ParamCompare, &c, &dir.path().join("p2")).unwrap();
    let spr: Vec<usize> = param.rows.iter().map(|r| r.samples_per_ray).collect();
    assert_eq!(spr[0], spr[1]);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let data = dir.path().join("data");

    let ok = bin()
        .args(["synth", "--seed", "1", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&data)
        .status()
        .unwrap();
    assert_eq!(ok.code(), Some(0));
    assert!(data.join("manifest.json").exists());

    let bad_mode = bin()
        .args(["train", "--mode", "nerf", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(bad_mode.status.code(), Some(2));

    let no_ckpt = bin()
        .arg("eval")
        .arg("--data")
        .arg(&data)
        .arg("--checkpoint")
        .arg(dir.path().join("missing.bin"))
        .arg("--out")
        .arg(dir.path().join("eval"))
        .output()
        .unwrap();
    assert_eq!(no_ckpt.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&no_ckpt.stderr).contains("missing.bin"));

    let no_out = bin().args(["synth"]).output().unwrap();
    assert_eq!(no_out.status.code(), Some(2));
    let unknown = bin().args(["fly"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(2));
}
