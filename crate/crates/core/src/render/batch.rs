//! Batched coarse/fine rendering over many rays, with the reverse pass
//! through compositing used by training.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::quadrature::{RayQuadrature, cell_edges, cell_widths, importance_sample, merge_sorted, sample_segment};
use crate::error::{Error, Result};
use crate::field::{InputKind, RadianceField, Trace};
use crate::geometry::{intersect_unit_sphere, outer_direction, Ray, SphereCrossing};

/// Smallest inverse radius handed to the background field.
const MIN_INV_RADIUS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parameterization {
    /// One Euclidean volume sampled over `[near, far]` along every ray.
    Bounded { near: f64, far: f64 },
    /// Inner unit sphere in depth plus the outer volume in inverse radius.
    NerfPlusPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub parameterization: Parameterization,
    /// Uniform samples per volume.
    pub n_coarse: usize,
    /// Importance samples per volume; zero disables the fine pass.
    pub n_fine: usize,
    /// Stratified jitter of inner-volume samples.
    pub jitter: bool,
    /// Stratified jitter of outer-volume samples.
    pub jitter_background: bool,
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_coarse == 0 {
            return Err(Error::InvalidConfig("n_coarse must be positive".into()));
        }
        if let Parameterization::Bounded { near, far } = self.parameterization {
            if !(near >= 0.0 && near < far && far.is_finite()) {
                return Err(Error::EmptyInterval(near, far));
            }
        }
        Ok(())
    }

    /// Deterministic copy for evaluation renders.
    pub fn without_jitter(&self) -> Self {
        Self {
            jitter: false,
            jitter_background: false,
            ..*self
        }
    }

    pub fn samples_per_ray(&self) -> usize {
        let volumes = match self.parameterization {
            Parameterization::Bounded { .. } => 1,
            Parameterization::NerfPlusPlus => 2,
        };
        volumes * (self.n_coarse + self.n_fine)
    }
}

/// Fields used by each pass. Index 0 is coarse, index 1 fine; both may be
/// the same field.
#[derive(Clone, Copy)]
pub struct FieldSlots<'a> {
    pub fg: [&'a dyn RadianceField; 2],
    pub bg: Option<[&'a dyn RadianceField; 2]>,
}

impl<'a> FieldSlots<'a> {
    pub fn single(field: &'a dyn RadianceField) -> Self {
        Self {
            fg: [field; 2],
            bg: None,
        }
    }

    pub fn pair(fg: &'a dyn RadianceField, bg: &'a dyn RadianceField) -> Self {
        Self {
            fg: [fg; 2],
            bg: Some([bg; 2]),
        }
    }

    pub(crate) fn check_nerfpp(&self) -> Result<()> {
        self.check(Parameterization::NerfPlusPlus)
    }

    fn check(&self, param: Parameterization) -> Result<()> {
        for f in self.fg {
            if f.input_kind() != InputKind::Euclidean3d {
                return Err(Error::ArchitectureMismatch("foreground fields take 3D positions".into()));
            }
        }
        match (param, self.bg) {
            (Parameterization::NerfPlusPlus, None) => Err(Error::ArchitectureMismatch(
                "two-volume rendering needs background fields".into(),
            )),
            (Parameterization::NerfPlusPlus, Some(bg)) => {
                if bg.iter().any(|f| f.input_kind() != InputKind::InvertedSphere4d) {
                    return Err(Error::ArchitectureMismatch(
                        "background fields take inverted-sphere positions".into(),
                    ));
                }
                Ok(())
            }
            (Parameterization::Bounded { .. }, _) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    /// Euclidean depth `t` along the ray.
    Inner,
    /// `s = 1 - 1/r`, so samples ascend from the sphere outwards.
    Outer,
}

/// One field evaluated on `n` samples of every ray in a batch.
#[derive(Debug, Clone)]
pub struct SegmentBatch {
    pub segment: Segment,
    pub n: usize,
    pub bounds: Vec<(f64, f64)>,
    /// Segment parameter per sample, ray-major.
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub color: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Transmittance reaching each sample.
    pub trans: Vec<f64>,
    pub weights: Vec<f64>,
    pub ray_color: Vec<f64>,
    /// Transmittance past the last sample of each ray.
    pub ray_trans: Vec<f64>,
    pub trace: Option<Trace>,
}

impl SegmentBatch {
    pub fn rays(&self) -> usize {
        self.bounds.len()
    }

    /// Inverse radius of each sample; only meaningful for the outer segment.
    pub fn inv_radius(s: f64) -> f64 {
        (1.0 - s).clamp(MIN_INV_RADIUS, 1.0)
    }

    pub(crate) fn evaluate(
        segment: Segment,
        field: &dyn RadianceField,
        rays: &[Ray],
        crossings: &[Option<SphereCrossing>],
        bounds: Vec<(f64, f64)>,
        t: Vec<f64>,
        n: usize,
    ) -> Result<Self> {
        let r = rays.len();
        let pd = field.input_kind().position_dim();
        let mut positions = Vec::with_capacity(r * n * pd);
        let mut directions = Vec::with_capacity(r * n * 3);
        for (k, ray) in rays.iter().enumerate() {
            let d = ray.direction;
            for &ti in &t[k * n..(k + 1) * n] {
                match segment {
                    Segment::Inner => {
                        let p = ray.at(ti);
                        positions.extend_from_slice(p.as_slice());
                    }
                    Segment::Outer => {
                        let crossing = crossings[k].as_ref().expect("outer segment has crossings");
                        let inv_r = Self::inv_radius(ti);
                        let dir = outer_direction(crossing, ray, inv_r)?;
                        positions.extend_from_slice(dir.as_slice());
                        positions.push(inv_r);
                    }
                }
                directions.extend_from_slice(d.as_slice());
            }
        }
        let (out, trace) = field.query_traced(&positions, &directions)?;

        let mut delta = Vec::with_capacity(r * n);
        for (k, &(a, b)) in bounds.iter().enumerate() {
            delta.extend(cell_widths(a, b, &t[k * n..(k + 1) * n]));
        }
        let mut batch = Self {
            segment,
            n,
            bounds,
            t,
            delta,
            sigma: out.sigma,
            color: out.color,
            alpha: vec![0.0; r * n],
            trans: vec![0.0; r * n],
            weights: vec![0.0; r * n],
            ray_color: vec![0.0; r * 3],
            ray_trans: vec![0.0; r],
            trace,
        };
        batch.composite();
        Ok(batch)
    }

    fn composite(&mut self) {
        let n = self.n;
        for k in 0..self.rays() {
            let mut tr = 1.0;
            let mut c = [0.0; 3];
            for i in k * n..(k + 1) * n {
                let a = -(-self.sigma[i] * self.delta[i]).exp_m1();
                let w = tr * a;
                self.alpha[i] = a;
                self.trans[i] = tr;
                self.weights[i] = w;
                for ch in 0..3 {
                    c[ch] += w * self.color[3 * i + ch];
                }
                tr *= 1.0 - a;
            }
            self.ray_color[3 * k..3 * k + 3].copy_from_slice(&c);
            self.ray_trans[k] = tr;
        }
    }

    /// Samples of ray `k` in compositing order.
    ///
    /// Outer-segment `t_values` are reported as inverse radius, so they
    /// descend from 1 towards 0.
    pub fn quadrature(&self, k: usize) -> RayQuadrature {
        let r = k * self.n..(k + 1) * self.n;
        let t_values = match self.segment {
            Segment::Inner => self.t[r.clone()].to_vec(),
            Segment::Outer => self.t[r.clone()].iter().map(|&s| Self::inv_radius(s)).collect(),
        };
        RayQuadrature {
            t_values,
            deltas: self.delta[r.clone()].to_vec(),
            sigmas: self.sigma[r.clone()].to_vec(),
            colors: r.clone().map(|i| std::array::from_fn(|ch| self.color[3 * i + ch])).collect(),
            alphas: self.alpha[r.clone()].to_vec(),
            transmittances: self.trans[r.clone()].to_vec(),
            weights: self.weights[r].to_vec(),
        }
    }

    /// Cotangents of the field outputs given cotangents of each ray's color
    /// and (optionally) final transmittance.
    pub fn backward(&self, g_color: &[f64], g_trans: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut d_sigma = vec![0.0; self.sigma.len()];
        let mut d_color = vec![0.0; self.color.len()];
        for k in 0..self.rays() {
            let g = &g_color[3 * k..3 * k + 3];
            let gt = g_trans.map_or(0.0, |v| v[k]);
            let t_final = self.ray_trans[k];
            // Running sum of w_j c_j over samples after the current one.
            let mut suffix = [0.0; 3];
            for i in (k * n..(k + 1) * n).rev() {
                let c = &self.color[3 * i..3 * i + 3];
                let w = self.weights[i];
                let t_next = self.trans[i] * (1.0 - self.alpha[i]);
                let mut ds = -gt * t_final;
                for ch in 0..3 {
                    d_color[3 * i + ch] = w * g[ch];
                    ds += g[ch] * (t_next * c[ch] - suffix[ch]);
                    suffix[ch] += w * c[ch];
                }
                d_sigma[i] = ds * self.delta[i];
            }
        }
        (d_sigma, d_color)
    }
}

/// One coarse or fine pass: foreground segment, optional background segment
/// and their composite.
#[derive(Debug, Clone)]
pub struct Pass {
    pub fg: SegmentBatch,
    pub bg: Option<SegmentBatch>,
    /// `fg + T_fg * bg` per ray.
    pub color: Vec<f64>,
}

/// Cotangents for the field outputs of one pass.
#[derive(Debug, Clone)]
pub struct PassGrads {
    pub fg: (Vec<f64>, Vec<f64>),
    pub bg: Option<(Vec<f64>, Vec<f64>)>,
}

impl Pass {
    pub(crate) fn assemble(fg: SegmentBatch, bg: Option<SegmentBatch>) -> Self {
        let mut color = fg.ray_color.clone();
        if let Some(bg) = &bg {
            for k in 0..fg.rays() {
                for ch in 0..3 {
                    color[3 * k + ch] = fg.ray_color[3 * k + ch] + fg.ray_trans[k] * bg.ray_color[3 * k + ch];
                }
            }
        }
        Self { fg, bg, color }
    }

    pub fn outputs(&self) -> Vec<RenderOutput> {
        (0..self.fg.rays())
            .map(|k| {
                let fg_color = std::array::from_fn(|ch| self.fg.ray_color[3 * k + ch]);
                let bg_color = match &self.bg {
                    Some(bg) => std::array::from_fn(|ch| bg.ray_color[3 * k + ch]),
                    None => [0.0; 3],
                };
                RenderOutput {
                    color: std::array::from_fn(|ch| self.color[3 * k + ch]),
                    residual_transmittance: self.fg.ray_trans[k],
                    fg_color,
                    bg_color,
                }
            })
            .collect()
    }

    /// Reverse pass given the cotangent of the composite color per ray.
    pub fn backward(&self, g_color: &[f64]) -> PassGrads {
        match &self.bg {
            None => PassGrads {
                fg: self.fg.backward(g_color, None),
                bg: None,
            },
            Some(bg) => {
                let r = self.fg.rays();
                let mut g_trans = vec![0.0; r];
                let mut g_bg = vec![0.0; 3 * r];
                for k in 0..r {
                    for ch in 0..3 {
                        let g = g_color[3 * k + ch];
                        g_trans[k] += g * bg.ray_color[3 * k + ch];
                        g_bg[3 * k + ch] = g * self.fg.ray_trans[k];
                    }
                }
                PassGrads {
                    fg: self.fg.backward(g_color, Some(&g_trans)),
                    bg: Some(bg.backward(&g_bg, None)),
                }
            }
        }
    }
}

/// Per-ray result of the composite rendering integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOutput {
    pub color: [f64; 3],
    /// Transmittance left when the ray leaves the foreground volume.
    pub residual_transmittance: f64,
    pub fg_color: [f64; 3],
    pub bg_color: [f64; 3],
}

/// Everything the coarse and fine passes computed for a batch of rays.
#[derive(Debug, Clone)]
pub struct RenderTape {
    pub coarse: Pass,
    pub fine: Option<Pass>,
}

impl RenderTape {
    /// The pass whose colors are reported: fine when present.
    pub fn final_pass(&self) -> &Pass {
        self.fine.as_ref().unwrap_or(&self.coarse)
    }

    pub fn outputs(&self) -> Vec<RenderOutput> {
        self.final_pass().outputs()
    }
}

fn coarse_samples<R: Rng + ?Sized>(
    bounds: &[(f64, f64)],
    n: usize,
    mut rng: Option<&mut R>,
) -> Result<Vec<f64>> {
    let mut t = Vec::with_capacity(bounds.len() * n);
    for &(a, b) in bounds {
        t.extend(sample_segment(a, b, n, rng.as_deref_mut())?);
    }
    Ok(t)
}

fn fine_samples<R: Rng + ?Sized>(coarse: &SegmentBatch, n_fine: usize, mut rng: Option<&mut R>) -> Result<Vec<f64>> {
    let n = coarse.n;
    let mut t = Vec::with_capacity(coarse.rays() * (n + n_fine));
    for (k, &(a, b)) in coarse.bounds.iter().enumerate() {
        let tc = &coarse.t[k * n..(k + 1) * n];
        let edges = cell_edges(a, b, tc);
        let extra = importance_sample(&edges, &coarse.weights[k * n..(k + 1) * n], n_fine, rng.as_deref_mut())?;
        t.extend(merge_sorted(tc, &extra));
    }
    Ok(t)
}

/// Render a batch of rays through the coarse and (optionally) fine passes.
///
/// `rng` supplies the jitter draws when jitter is enabled in `config`; it is
/// also used by importance sampling in that case.
pub fn render_batch<R: Rng + ?Sized>(
    slots: FieldSlots<'_>,
    rays: &[Ray],
    config: &RenderConfig,
    mut rng: Option<&mut R>,
) -> Result<RenderTape> {
    config.validate()?;
    slots.check(config.parameterization)?;

    let (fg_bounds, crossings): (Vec<(f64, f64)>, Vec<Option<SphereCrossing>>) = match config.parameterization {
        Parameterization::Bounded { near, far } => (vec![(near, far); rays.len()], vec![None; rays.len()]),
        Parameterization::NerfPlusPlus => {
            let mut bounds = Vec::with_capacity(rays.len());
            let mut cross = Vec::with_capacity(rays.len());
            for ray in rays {
                let c = intersect_unit_sphere(ray)?;
                bounds.push((0.0, c.t_far));
                cross.push(Some(c));
            }
            (bounds, cross)
        }
    };
    let bg_bounds = vec![(0.0, 1.0); rays.len()];

    let n = config.n_coarse;
    let t = coarse_samples(&fg_bounds, n, if config.jitter { rng.as_deref_mut() } else { None })?;
    let fg = SegmentBatch::evaluate(Segment::Inner, slots.fg[0], rays, &crossings, fg_bounds.clone(), t, n)?;
    let bg = match slots.bg.filter(|_| config.parameterization == Parameterization::NerfPlusPlus) {
        Some(bg_fields) => {
            let r = if config.jitter_background { rng.as_deref_mut() } else { None };
            let t = coarse_samples(&bg_bounds, n, r)?;
            Some(SegmentBatch::evaluate(
                Segment::Outer,
                bg_fields[0],
                rays,
                &crossings,
                bg_bounds.clone(),
                t,
                n,
            )?)
        }
        None => None,
    };
    let coarse = Pass::assemble(fg, bg);
    if config.n_fine == 0 {
        return Ok(RenderTape { coarse, fine: None });
    }

    let nf = n + config.n_fine;
    let t = fine_samples(&coarse.fg, config.n_fine, if config.jitter { rng.as_deref_mut() } else { None })?;
    let fg = SegmentBatch::evaluate(Segment::Inner, slots.fg[1], rays, &crossings, fg_bounds, t, nf)?;
    let bg = match (&coarse.bg, slots.bg) {
        (Some(coarse_bg), Some(bg_fields)) => {
            let r = if config.jitter_background { rng } else { None };
            let t = fine_samples(coarse_bg, config.n_fine, r)?;
            Some(SegmentBatch::evaluate(
                Segment::Outer,
                bg_fields[1],
                rays,
                &crossings,
                bg_bounds,
                t,
                nf,
            )?)
        }
        _ => None,
    };
    let fine = Pass::assemble(fg, bg);
    Ok(RenderTape {
        coarse,
        fine: Some(fine),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::analytic::ConstantField;
    use crate::geometry::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(rng: &mut ChaCha8Rng, rays: usize, n: usize) -> SegmentBatch {
        let field = ConstantField::vacuum(InputKind::Euclidean3d);
        let rs: Vec<Ray> = (0..rays)
            .map(|_| Ray::new(Vec3::zeros(), Vec3::new(rng.random_range(-1.0..1.0), 0.3, 1.0)))
            .collect();
        let bounds = vec![(0.0, 1.0); rays];
        let t = coarse_samples(&bounds, n, Some(&mut *rng)).unwrap();
        let mut b = SegmentBatch::evaluate(Segment::Inner, &field, &rs, &vec![None; rays], bounds, t, n).unwrap();
        b.sigma.iter_mut().for_each(|s| *s = rng.random_range(0.0..8.0));
        b.color.iter_mut().for_each(|c| *c = rng.random_range(0.0..1.0));
        b.composite();
        b
    }

    fn objective(b: &SegmentBatch, gc: &[f64], gt: &[f64]) -> f64 {
        let c: f64 = b.ray_color.iter().zip(gc).map(|(a, g)| a * g).sum();
        let t: f64 = b.ray_trans.iter().zip(gt).map(|(a, g)| a * g).sum();
        c + t
    }

    #[test]
    fn compositing_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let base = random_batch(&mut rng, 3, 7);
        let gc: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gt: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (ds, dc) = base.backward(&gc, Some(&gt));
        let h = 1e-6;
        let central = |perturb: &dyn Fn(&mut SegmentBatch, f64)| {
            let mut p = base.clone();
            perturb(&mut p, h);
            p.composite();
            let mut m = base.clone();
            perturb(&mut m, -h);
            m.composite();
            (objective(&p, &gc, &gt) - objective(&m, &gc, &gt)) / (2.0 * h)
        };
        for i in 0..base.sigma.len() {
            let fd = central(&|b, e| b.sigma[i] += e);
            assert!((fd - ds[i]).abs() < 1e-7, "sigma {i}: {fd} vs {}", ds[i]);
        }
        for i in 0..base.color.len() {
            let fd = central(&|b, e| b.color[i] += e);
            assert!((fd - dc[i]).abs() < 1e-7, "color {i}: {fd} vs {}", dc[i]);
        }
    }
}
