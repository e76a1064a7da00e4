//! Backprop vs central differences for both network variants.

use nerfpp::field::{FieldArchitecture, FieldModel, InputKind, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
/// Gradients this small are compared absolutely; relative error is meaningless there.
const ABS_FLOOR: f64 = 1e-8;

fn tiny_arch(variant: Variant, kind: InputKind, rng: &mut impl Rng) -> FieldArchitecture {
    let depth = rng.random_range(2..4);
    let arch = FieldArchitecture {
        variant: Variant::NerfAsymmetric,
        trunk_depth: depth,
        trunk_width: rng.random_range(4..8),
        skip_layers: if depth > 2 { vec![2] } else { vec![1] },
        view_branch_depth: rng.random_range(0..3),
        view_branch_width: rng.random_range(3..6),
        k_position: rng.random_range(0..3),
        k_direction: rng.random_range(0..2),
        input_kind: kind,
        position_scale: 1.0,
    };
    arch.with_variant(variant)
}

fn objective(model: &FieldModel, pos: &[f64], dirs: &[f64], ds: &[f64], dc: &[f64]) -> f64 {
    let (out, _) = model.forward_batch(pos, dirs).unwrap();
    let s: f64 = out.sigma.iter().zip(ds).map(|(a, b)| a * b).sum();
    let c: f64 = out.color.iter().zip(dc).map(|(a, b)| a * b).sum();
    s + c
}

fn check(variant: Variant, kind: InputKind, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = tiny_arch(variant, kind, &mut rng);
    let mut model = FieldModel::init(arch, seed).unwrap();
    // Zero-initialized biases can put a preactivation exactly on the ReLU
    // kink, where central differences see half a slope.
    for p in &mut model.params {
        for v in &mut p.data {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let n = 3;
    let pd = kind.position_dim();
    let pos: Vec<f64> = (0..n * pd).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut dirs = Vec::new();
    for _ in 0..n {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        dirs.extend(v.iter().map(|x| x / norm));
    }
    let ds: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dc: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-1.0..1.0)).collect();

    let (_, trace) = model.forward_batch(&pos, &dirs).unwrap();
    let grads = model.backward_batch(&trace, &ds, &dc).unwrap();

    let mut checked = 0;
    for (pi, p) in model.params.iter().enumerate() {
        for k in 0..p.data.len() {
            let mut plus = model.clone();
            plus.params[pi].data[k] += STEP;
            let mut minus = model.clone();
            minus.params[pi].data[k] -= STEP;
            let fd = (objective(&plus, &pos, &dirs, &ds, &dc) - objective(&minus, &pos, &dirs, &ds, &dc))
                / (2.0 * STEP);
            let bp = grads.grads[pi][k];
            let err = (fd - bp).abs();
            let scale = fd.abs().max(bp.abs());
            assert!(
                err <= REL_TOL * scale || err <= ABS_FLOOR,
                "{variant:?}/{kind:?} seed {seed}: {}[{k}] backprop {bp} vs fd {fd}",
                p.name
            );
            checked += 1;
        }
    }
    checked
}

#[test]
fn asymmetric_gradients_match_finite_differences() {
    for seed in 0..6 {
        let kind = if seed % 2 == 0 {
            InputKind::Euclidean3d
        } else {
            InputKind::InvertedSphere4d
        };
        assert!(check(Variant::NerfAsymmetric, kind, seed) > 0);
    }
}

#[test]
fn vanilla_gradients_match_finite_differences() {
    for seed in 100..106 {
        let kind = if seed % 2 == 0 {
            InputKind::Euclidean3d
        } else {
            InputKind::InvertedSphere4d
        };
        assert!(check(Variant::VanillaSymmetric, kind, seed) > 0);
    }
}
