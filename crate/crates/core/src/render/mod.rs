//! Volume rendering: quadrature, importance sampling and the two-volume
//! composite.

mod batch;
mod quadrature;

pub use batch::{
    render_batch, FieldSlots, Parameterization, Pass, PassGrads, RenderConfig, RenderOutput, RenderTape, Segment,
    SegmentBatch,
};
pub use quadrature::{
    cell_edges, cell_widths, importance_sample, merge_sorted, quadrature_weights, sample_segment, CompositeWeights,
    RayQuadrature, IMPORTANCE_EPS,
};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::field::RadianceField;
use crate::geometry::{intersect_unit_sphere, Ray};
use crate::image::Image;
use crate::scene::Camera;

/// Rays per batch when rendering whole images.
pub const IMAGE_CHUNK: usize = 1024;

/// Single-volume rendering of `field` over `[t_near, t_far]` with `n`
/// midpoint samples.
pub fn render_ray_bounded(
    field: &dyn RadianceField,
    ray: &Ray,
    t_near: f64,
    t_far: f64,
    n: usize,
) -> Result<RenderOutput> {
    Ok(bounded_quadrature(field, ray, t_near, t_far, n)?.0)
}

/// [`render_ray_bounded`] plus the per-sample quadrature.
pub fn bounded_quadrature(
    field: &dyn RadianceField,
    ray: &Ray,
    t_near: f64,
    t_far: f64,
    n: usize,
) -> Result<(RenderOutput, RayQuadrature)> {
    let t = sample_segment::<ChaCha8Rng>(t_near, t_far, n, None)?;
    let seg = SegmentBatch::evaluate(
        Segment::Inner,
        field,
        std::slice::from_ref(ray),
        &[None],
        vec![(t_near, t_far)],
        t,
        n,
    )?;
    let q = seg.quadrature(0);
    let pass = Pass {
        color: seg.ray_color.clone(),
        fg: seg,
        bg: None,
    };
    Ok((pass.outputs()[0], q))
}

/// Foreground over the unit-sphere chord plus background over inverse radius
/// in `(0, 1]`, each with midpoint samples.
pub fn render_ray_nerfpp(
    fg: &dyn RadianceField,
    bg: &dyn RadianceField,
    ray: &Ray,
    n_fg: usize,
    n_bg: usize,
) -> Result<RenderOutput> {
    Ok(nerfpp_quadrature(fg, bg, ray, n_fg, n_bg)?.0)
}

/// [`render_ray_nerfpp`] plus the foreground and background quadratures.
pub fn nerfpp_quadrature(
    fg: &dyn RadianceField,
    bg: &dyn RadianceField,
    ray: &Ray,
    n_fg: usize,
    n_bg: usize,
) -> Result<(RenderOutput, RayQuadrature, RayQuadrature)> {
    let crossing = intersect_unit_sphere(ray)?;
    FieldSlots::pair(fg, bg).check_nerfpp()?;
    let rays = std::slice::from_ref(ray);
    let crossings = [Some(crossing)];
    let t_fg = sample_segment::<ChaCha8Rng>(0.0, crossing.t_far, n_fg, None)?;
    let fg_seg = SegmentBatch::evaluate(
        Segment::Inner,
        fg,
        rays,
        &crossings,
        vec![(0.0, crossing.t_far)],
        t_fg,
        n_fg,
    )?;
    let t_bg = sample_segment::<ChaCha8Rng>(0.0, 1.0, n_bg, None)?;
    let bg_seg = SegmentBatch::evaluate(Segment::Outer, bg, rays, &crossings, vec![(0.0, 1.0)], t_bg, n_bg)?;
    let (qf, qb) = (fg_seg.quadrature(0), bg_seg.quadrature(0));
    let pass = Pass::assemble(fg_seg, Some(bg_seg));
    Ok((pass.outputs()[0], qf, qb))
}

/// Per-pixel render outputs in row-major order; jitter is disabled.
pub fn render_outputs(camera: &Camera, config: &RenderConfig, slots: FieldSlots<'_>) -> Result<Vec<RenderOutput>> {
    let config = config.without_jitter();
    let rays = camera.rays();
    let chunks: Vec<Result<Vec<RenderOutput>>> = rays
        .par_chunks(IMAGE_CHUNK)
        .map(|chunk| render_batch::<ChaCha8Rng>(slots, chunk, &config, None).map(|tape| tape.outputs()))
        .collect();
    let mut out = Vec::with_capacity(rays.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Render every pixel of `camera`, clamping channels to `[0, 1]`.
pub fn render_image(camera: &Camera, config: &RenderConfig, slots: FieldSlots<'_>) -> Result<Image> {
    let outputs = render_outputs(camera, config, slots)?;
    Ok(Image {
        width: camera.width,
        height: camera.height,
        data: outputs
            .iter()
            .flat_map(|o| o.color.map(|c| c.clamp(0.0, 1.0)))
            .collect(),
    })
}

#[cfg(test)]
mod tests;
