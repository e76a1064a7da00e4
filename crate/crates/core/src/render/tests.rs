use super::*;
use crate::field::{FieldArchitecture, FieldModel, InputKind};
use crate::geometry::Vec3;
use crate::scene::analytic::{ConstantField, InverseRadiusBand, UniformBall};
use crate::scene::generate_ray;
use crate::error::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn random_inner_ray(rng: &mut ChaCha8Rng, max_origin: f64) -> Ray {
    let unit = |rng: &mut ChaCha8Rng| {
        Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            .normalize()
    };
    let o = unit(rng) * rng.random_range(0.0..max_origin);
    Ray::new(o, unit(rng))
}

fn small_model(kind: InputKind, seed: u64) -> FieldModel {
    let mut arch = FieldArchitecture::nerf(kind);
    arch.trunk_width = 16;
    arch.view_branch_width = 8;
    arch.k_position = 4;
    FieldModel::init(arch, seed).unwrap()
}

#[test]
fn constant_sphere_matches_closed_form() {
    let c = [0.2, 0.5, 0.9];
    let ray = Ray::new(Vec3::new(0.0, 0.0, -1.5), Vec3::z());
    for sigma in [0.5, 1.0, 4.0] {
        let ball = UniformBall {
            radius: 1.0,
            sigma,
            color: c,
        };
        let out = render_ray_bounded(&ball, &ray, 0.5, 2.5, 256).unwrap();
        let t = (-2.0 * sigma).exp();
        assert!((out.residual_transmittance - t).abs() < 1e-4);
        for k in 0..3 {
            assert!((out.color[k] - (1.0 - t) * c[k]).abs() < 1e-3);
        }
    }
}

#[test]
fn zero_density_is_black_and_transparent() {
    let field = ConstantField::vacuum(InputKind::Euclidean3d);
    let out = render_ray_bounded(&field, &Ray::new(Vec3::zeros(), Vec3::x()), 0.0, 3.0, 64).unwrap();
    assert_eq!(out.color, [0.0; 3]);
    assert_eq!(out.residual_transmittance, 1.0);
}

/// Smooth, strictly positive density with position-dependent color.
struct Smooth;

impl RadianceField for Smooth {
    fn input_kind(&self) -> InputKind {
        InputKind::Euclidean3d
    }

    fn query_batch(&self, positions: &[f64], _directions: &[f64]) -> Result<crate::field::FieldOutput> {
        let mut sigma = Vec::new();
        let mut color = Vec::new();
        for p in positions.chunks_exact(3) {
            sigma.push(1.5 + (3.0 * p[0]).sin() * (2.0 * p[2]).cos());
            color.extend([0.5 + 0.4 * (5.0 * p[2]).sin(), 0.5, 0.5 + 0.4 * p[1].cos()]);
        }
        Ok(crate::field::FieldOutput { sigma, color })
    }
}

#[test]
fn quadrature_converges_as_samples_double() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let ray = random_inner_ray(&mut rng, 0.5);
        let reference = render_ray_bounded(&Smooth, &ray, 0.0, 2.0, 1 << 16).unwrap();
        let errors: Vec<f64> = (5..=10)
            .map(|e| {
                let out = render_ray_bounded(&Smooth, &ray, 0.0, 2.0, 1 << e).unwrap();
                (0..3).map(|k| (out.color[k] - reference.color[k]).abs()).fold(0.0, f64::max)
            })
            .collect();
        for w in errors.windows(2) {
            assert!(w[1] <= w[0] * 1.05 + 1e-12, "{errors:?}");
        }
        assert!(errors[5] < errors[0] / 100.0, "{errors:?}");
    }
}

#[test]
fn vacuum_background_reduces_to_bounded_render() {
    let fg = small_model(InputKind::Euclidean3d, 3);
    let bg = ConstantField::vacuum(InputKind::InvertedSphere4d);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let ray = random_inner_ray(&mut rng, 0.9);
        let a = render_ray_nerfpp(&fg, &bg, &ray, 512, 64).unwrap();
        let t_far = crate::geometry::intersect_unit_sphere(&ray).unwrap().t_far;
        let b = render_ray_bounded(&fg, &ray, 0.0, t_far, 512).unwrap();
        for k in 0..3 {
            assert!((a.color[k] - b.color[k]).abs() < 1e-6);
        }
    }
}

#[test]
fn opaque_background_band_saturates_to_its_color() {
    let fg = ConstantField::vacuum(InputKind::Euclidean3d);
    let c0 = [0.9, 0.4, 0.1];
    let bg = InverseRadiusBand {
        lo: 0.2,
        hi: 0.4,
        sigma: 400.0,
        color: c0,
    };
    let ray = Ray::new(Vec3::new(0.1, 0.2, 0.0), Vec3::new(0.3, -0.5, 0.8));
    let mut prev = f64::INFINITY;
    for n in [16, 64, 256, 1024] {
        let out = render_ray_nerfpp(&fg, &bg, &ray, 8, n).unwrap();
        assert_eq!(out.residual_transmittance, 1.0);
        let err = (0..3).map(|k| (out.color[k] - c0[k]).abs()).fold(0.0, f64::max);
        assert!(err <= prev + 1e-12, "n = {n}: {err} after {prev}");
        prev = err;
    }
    assert!(prev < 1e-6);
}

#[test]
fn opaque_foreground_hides_background() {
    let fg = ConstantField {
        input_kind: InputKind::Euclidean3d,
        sigma: 1e3,
        color: [0.3, 0.3, 0.3],
    };
    let ray = Ray::new(Vec3::zeros(), Vec3::y());
    let a = render_ray_nerfpp(&fg, &small_model(InputKind::InvertedSphere4d, 1), &ray, 64, 32).unwrap();
    let b = render_ray_nerfpp(&fg, &small_model(InputKind::InvertedSphere4d, 2), &ray, 64, 32).unwrap();
    assert!(a.residual_transmittance < 1e-12);
    for k in 0..3 {
        assert!((a.color[k] - b.color[k]).abs() < 1e-12);
    }
}

#[test]
fn nerfpp_rejects_outside_origins_and_wrong_inputs() {
    let fg = small_model(InputKind::Euclidean3d, 1);
    let bg = small_model(InputKind::InvertedSphere4d, 1);
    let outside = Ray::new(Vec3::new(0.0, 0.0, 1.5), Vec3::z());
    assert!(matches!(
        render_ray_nerfpp(&fg, &bg, &outside, 8, 8),
        Err(Error::OriginOutsideSphere(_))
    ));
    let inside = Ray::new(Vec3::zeros(), Vec3::z());
    assert!(matches!(
        render_ray_nerfpp(&fg, &fg, &inside, 8, 8),
        Err(Error::ArchitectureMismatch(_))
    ));
}

#[test]
fn fine_pass_improves_a_thin_shell() {
    // A thin dense ball is easy to miss with coarse samples alone.
    let ball = UniformBall {
        radius: 0.05,
        sigma: 200.0,
        color: [1.0, 0.5, 0.25],
    };
    let ray = Ray::new(Vec3::new(0.0, 0.0, -0.5), Vec3::z());
    let exact = 1.0 - (-200.0f64 * 0.1).exp();
    let config = |n_fine| RenderConfig {
        parameterization: Parameterization::Bounded { near: 0.0, far: 1.0 },
        n_coarse: 16,
        n_fine,
        jitter: false,
        jitter_background: false,
    };
    let coarse = render_batch::<ChaCha8Rng>(FieldSlots::single(&ball), &[ray], &config(0), None).unwrap();
    let fine = render_batch::<ChaCha8Rng>(FieldSlots::single(&ball), &[ray], &config(64), None).unwrap();
    let ec = (coarse.outputs()[0].color[0] - exact).abs();
    let ef = (fine.outputs()[0].color[0] - exact).abs();
    assert!(ef < ec, "fine {ef} vs coarse {ec}");
}

#[test]
fn image_pixels_match_single_ray_renders() {
    let cam = Camera::look_at(Vec3::new(0.4, 0.3, 0.2), Vec3::zeros(), Vec3::z(), 6, 4, 0.9);
    let fg = small_model(InputKind::Euclidean3d, 5);
    let bg = small_model(InputKind::InvertedSphere4d, 6);
    let config = RenderConfig {
        parameterization: Parameterization::NerfPlusPlus,
        n_coarse: 24,
        n_fine: 0,
        jitter: true,
        jitter_background: true,
    };
    let img = render_image(&cam, &config, FieldSlots::pair(&fg, &bg)).unwrap();
    assert_eq!(img, render_image(&cam, &config, FieldSlots::pair(&fg, &bg)).unwrap());
    for (x, y) in [(0, 0), (5, 3), (2, 1)] {
        let ray = generate_ray(&cam, x as f64 + 0.5, y as f64 + 0.5).unwrap();
        let out = render_ray_nerfpp(&fg, &bg, &ray, 24, 24).unwrap();
        let px = img.pixel(x, y);
        for k in 0..3 {
            assert!((px[k] - out.color[k]).abs() < 1e-14);
        }
    }
}

#[test]
fn vacuum_image_is_black() {
    let cam = Camera::look_at(Vec3::new(0.0, 0.5, 0.0), Vec3::zeros(), Vec3::z(), 2, 2, 1.0);
    let fg = ConstantField::vacuum(InputKind::Euclidean3d);
    let bg = ConstantField::vacuum(InputKind::InvertedSphere4d);
    let config = RenderConfig {
        parameterization: Parameterization::NerfPlusPlus,
        n_coarse: 8,
        n_fine: 8,
        jitter: false,
        jitter_background: false,
    };
    let img = render_image(&cam, &config, FieldSlots::pair(&fg, &bg)).unwrap();
    assert!(img.data.iter().all(|&v| v == 0.0));
}

#[test]
fn shared_directions_render_identically_across_resolutions() {
    let fg = small_model(InputKind::Euclidean3d, 9);
    let config = RenderConfig {
        parameterization: Parameterization::Bounded { near: 0.0, far: 2.0 },
        n_coarse: 16,
        n_fine: 8,
        jitter: false,
        jitter_background: false,
    };
    let lo = Camera::look_at(Vec3::new(0.5, 0.1, 0.2), Vec3::zeros(), Vec3::z(), 4, 4, 1.0);
    let hi = Camera::look_at(Vec3::new(0.5, 0.1, 0.2), Vec3::zeros(), Vec3::z(), 8, 8, 1.0);
    let slots = FieldSlots::single(&fg);
    // Corner (1, 2) of the coarse grid is corner (2, 4) of the fine grid.
    let a = render_batch::<ChaCha8Rng>(slots, &[generate_ray(&lo, 1.0, 2.0).unwrap()], &config, None).unwrap();
    let b = render_batch::<ChaCha8Rng>(slots, &[generate_ray(&hi, 2.0, 4.0).unwrap()], &config, None).unwrap();
    assert_eq!(a.outputs(), b.outputs());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn composite_identity_and_energy_bound(seed in any::<u64>(), n_fine in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fg = small_model(InputKind::Euclidean3d, seed);
        let bg = small_model(InputKind::InvertedSphere4d, seed.wrapping_add(1));
        let rays: Vec<Ray> = (0..4).map(|_| random_inner_ray(&mut rng, 0.95)).collect();
        let config = RenderConfig {
            parameterization: Parameterization::NerfPlusPlus,
            n_coarse: 16,
            n_fine,
            jitter: true,
            jitter_background: true,
        };
        let tape = render_batch(FieldSlots::pair(&fg, &bg), &rays, &config, Some(&mut rng)).unwrap();
        for pass in std::iter::once(&tape.coarse).chain(tape.fine.as_ref()) {
            let bgs = pass.bg.as_ref().unwrap();
            for (k, out) in pass.outputs().iter().enumerate() {
                for ch in 0..3 {
                    prop_assert_eq!(out.color[ch], out.fg_color[ch] + out.residual_transmittance * out.bg_color[ch]);
                }
                prop_assert!((0.0..=1.0).contains(&out.residual_transmittance));
                let n = pass.fg.n;
                let wf: f64 = pass.fg.weights[k * n..(k + 1) * n].iter().sum();
                let wb: f64 = bgs.weights[k * n..(k + 1) * n].iter().sum();
                prop_assert!(wf + out.residual_transmittance * wb <= 1.0 + 1e-9);
                prop_assert!(pass.fg.t[k * n..(k + 1) * n].windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
