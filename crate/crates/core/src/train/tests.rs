use super::*;
use crate::geometry::Vec3;
use crate::scene::{synthesize, SynthSpec};

fn tiny_network() -> NetworkConfig {
    NetworkConfig {
        trunk_depth: 2,
        trunk_width: 16,
        skip_layers: vec![1],
        view_branch_depth: 1,
        view_branch_width: 8,
        k_position: 3,
        k_direction: Some(2),
        ..NetworkConfig::default()
    }
}

fn tiny_config(mode: TrainMode) -> TrainConfig {
    TrainConfig {
        mode,
        batch_rays: 32,
        iterations: 20,
        lr: 5e-3,
        n_coarse: 12,
        n_fine: 6,
        seed: 3,
        eval_every: 10,
        near: 0.0,
        far: 1.6,
        network: tiny_network(),
        ..TrainConfig::default()
    }
}

fn tiny_dataset() -> PosedDataset {
    let spec = SynthSpec {
        n_train: 4,
        n_test: 2,
        width: 12,
        height: 12,
        oracle_samples: 256,
        ..SynthSpec::default()
    };
    synthesize(&spec, 1).unwrap()
}

#[test]
fn mse_examples() {
    assert_eq!(mse_loss(&[0.2, 0.3, 0.4], &[0.2, 0.3, 0.4]).unwrap(), 0.0);
    let pred = [0.6; 6];
    let target = [0.5; 6];
    assert!((mse_loss(&pred, &target).unwrap() - 0.01).abs() < 1e-15);
    assert!((mse_loss(&[1.0, 0.0, 0.0], &[0.0; 3]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!(matches!(mse_loss(&[0.0; 3], &[0.0; 6]), Err(Error::ShapeMismatch(_))));
}

#[test]
fn mode_names_round_trip() {
    for m in TrainMode::ALL {
        assert_eq!(m.name().parse::<TrainMode>().unwrap(), m);
    }
    assert!("nerf".parse::<TrainMode>().is_err());
}

#[test]
fn field_sets_follow_mode() {
    let roles = |mode, share| {
        let mut c = tiny_config(mode);
        c.share_coarse_fine = share;
        FieldSet::init(&c).unwrap().roles
    };
    assert_eq!(roles(TrainMode::Nerfpp, false), ["fg_coarse", "fg_fine", "bg_coarse", "bg_fine"]);
    assert_eq!(roles(TrainMode::Nerfpp, true), ["fg_coarse", "bg_coarse"]);
    assert_eq!(roles(TrainMode::BoundedNerf, false), ["fg_coarse", "fg_fine"]);
    let ambiguity = FieldSet::init(&tiny_config(TrainMode::FixedSphereAmbiguity)).unwrap();
    assert!(ambiguity.models.iter().all(|m| m.frozen_opacity.is_some()));
}

fn batch(n: usize, seed: u64) -> (Vec<Ray>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rays = (0..n)
        .map(|_| {
            let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            Ray::new(Vec3::new(0.0, 0.0, 0.3), d)
        })
        .collect();
    let colors = (0..3 * n).map(|_| rng.random_range(0.1..0.9)).collect();
    (rays, colors)
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let mut c = tiny_config(TrainMode::Nerfpp);
    c.lr = 0.0;
    let mut t = Trainer::new(c).unwrap();
    let before = t.fields.clone();
    let (rays, colors) = batch(16, 1);
    let stats = t.train_step(&rays, &colors, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(stats.loss.is_finite() && stats.loss > 0.0);
    assert_eq!(t.fields, before);
}

#[test]
fn ambiguity_mode_never_touches_density_head() {
    let mut t = Trainer::new(tiny_config(TrainMode::FixedSphereAmbiguity)).unwrap();
    let frozen: Vec<Vec<Vec<f64>>> = t
        .fields
        .models
        .iter()
        .map(|m| m.sigma_path_params().into_iter().map(|i| m.params[i].data.clone()).collect())
        .collect();
    let (rays, colors) = batch(16, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let start = t.fields.clone();
    for _ in 0..5 {
        t.train_step(&rays, &colors, &mut rng).unwrap();
    }
    assert_ne!(t.fields, start);
    for (m, f) in t.fields.models.iter().zip(&frozen) {
        for (i, data) in m.sigma_path_params().into_iter().zip(f) {
            assert_eq!(&m.params[i].data, data);
        }
    }
}

#[test]
fn memorizes_one_tiny_batch() {
    let mut c = tiny_config(TrainMode::BoundedNerf);
    c.n_fine = 0;
    c.jitter = false;
    c.network.trunk_width = 32;
    let mut t = Trainer::new(c).unwrap();
    let (rays, colors) = batch(8, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut loss = f64::INFINITY;
    for _ in 0..2000 {
        loss = t.train_step(&rays, &colors, &mut rng).unwrap().loss;
        if loss < 1e-4 {
            break;
        }
    }
    assert!(loss < 1e-4, "loss {loss}");
}

#[test]
fn non_finite_parameters_abort() {
    let mut t = Trainer::new(tiny_config(TrainMode::BoundedNerf)).unwrap();
    t.fields.models[0].param_mut("rgb.bias").unwrap().data[0] = f64::NAN;
    let (rays, colors) = batch(4, 1);
    let err = t.train_step(&rays, &colors, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { iteration: 0, .. }));
}

#[test]
fn zero_iterations_returns_initial_models() {
    let mut c = tiny_config(TrainMode::Nerfpp);
    c.iterations = 0;
    let (t, log) = fit(&tiny_dataset(), c.clone(), None).unwrap();
    assert!(log.records.is_empty());
    assert_eq!(t.fields, FieldSet::init(&c).unwrap());
    assert_eq!(log.to_csv(false), format!("{}\n", record::LOG_HEADER));
}

#[test]
fn small_test_images_fail_before_training() {
    let spec = SynthSpec {
        n_train: 2,
        n_test: 1,
        width: 8,
        height: 8,
        oracle_samples: 256,
        ..SynthSpec::default()
    };
    let data = synthesize(&spec, 1).unwrap();
    let err = fit(&data, tiny_config(TrainMode::BoundedNerf), None).unwrap_err();
    assert!(matches!(err, Error::ImageTooSmall(11)));
}

#[test]
fn seeded_fits_are_reproducible_and_resumable() {
    let data = tiny_dataset();
    let dir = tempfile::tempdir().unwrap();
    let (full, log) = fit(&data, tiny_config(TrainMode::Nerfpp), Some(dir.path())).unwrap();
    let (again, log2) = fit(&data, tiny_config(TrainMode::Nerfpp), None).unwrap();
    assert_eq!(log.records.len(), 2);
    assert!(log.same_progress(&log2));
    assert_eq!(full.fields, again.fields);

    // Stop halfway, resume from the checkpoint, and compare.
    let mut half = tiny_config(TrainMode::Nerfpp);
    half.iterations = 10;
    let part = tempfile::tempdir().unwrap();
    fit(&data, half, Some(part.path())).unwrap();
    let ckpt = checkpoint::load(&part.path().join(CHECKPOINT_FILE)).unwrap();
    let mut resumed = Trainer::from_checkpoint(ckpt).unwrap();
    assert_eq!(resumed.iteration, 10);
    resumed.config.iterations = 20;
    let (done, tail) = fit_from(resumed, &data, None).unwrap();
    assert_eq!(done.fields, full.fields);
    let expected = TrainLog {
        records: log.records[1..].to_vec(),
    };
    assert!(tail.same_progress(&expected));
}

#[test]
fn checkpoint_mode_mismatch_is_reported() {
    let t = Trainer::new(tiny_config(TrainMode::Nerfpp)).unwrap();
    let mut ckpt = t.checkpoint();
    let mut other = tiny_config(TrainMode::BoundedNerf);
    other.n_fine = 0;
    ckpt.meta = serde_json::to_value(other).unwrap();
    assert!(matches!(Trainer::from_checkpoint(ckpt), Err(Error::ArchitectureMismatch(_))));
}
