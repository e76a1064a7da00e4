use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{FieldArchitecture, InputKind, Variant};
use super::encoding::positional_encode_into;
use super::linalg::{linear_backward, linear_forward, relu_backward_inplace, relu_inplace};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Analytic density that replaces the learned density head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrozenOpacity {
    /// Constant density inside `radius - thickness <= |x| <= radius`.
    SphereShell {
        radius: f64,
        thickness: f64,
        density: f64,
    },
}

impl FrozenOpacity {
    pub fn unit_sphere_shell() -> Self {
        FrozenOpacity::SphereShell {
            radius: 1.0,
            thickness: 0.1,
            density: 60.0,
        }
    }

    pub fn density(&self, p: &[f64]) -> f64 {
        match *self {
            FrozenOpacity::SphereShell {
                radius,
                thickness,
                density,
            } => {
                let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                if r <= radius && r >= radius - thickness {
                    density
                } else {
                    0.0
                }
            }
        }
    }
}

/// Indices of one dense layer's weight and bias in the parameter list.
#[derive(Debug, Clone, Copy)]
struct Dense {
    w: usize,
    b: usize,
    outputs: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    trunk: Vec<Dense>,
    sigma: Dense,
    /// View branch (asymmetric) or color network (vanilla).
    branch: Vec<Dense>,
    rgb: Dense,
}

/// Parameter declarations in checkpoint order: name, shape, init bound.
fn plan(arch: &FieldArchitecture) -> (Layout, Vec<(String, Vec<usize>, f64)>) {
    let mut decls = Vec::new();
    let mut push = |name: String, fan_in: usize, outputs: usize, hidden: bool| {
        let bound = if hidden {
            (6.0 / fan_in as f64).sqrt()
        } else {
            (1.0 / fan_in as f64).sqrt()
        };
        let w = decls.len();
        decls.push((format!("{name}.weight"), vec![fan_in, outputs], bound));
        decls.push((format!("{name}.bias"), vec![outputs], 0.0));
        Dense {
            w,
            b: w + 1,
            outputs,
        }
    };

    let ex = arch.encoded_position_dim();
    let ed = arch.encoded_direction_dim();
    let width = arch.trunk_width;

    let trunk: Vec<Dense> = (0..arch.trunk_depth)
        .map(|i| {
            let fan_in = if i == 0 {
                ex
            } else if arch.skip_layers.contains(&i) {
                width + ex
            } else {
                width
            };
            push(format!("trunk.{i}"), fan_in, width, true)
        })
        .collect();
    let sigma = push("sigma".into(), width, 1, false);

    let (branch, rgb) = match arch.variant {
        Variant::NerfAsymmetric => {
            let vw = arch.view_branch_width;
            let branch: Vec<Dense> = (0..arch.view_branch_depth)
                .map(|j| {
                    let fan_in = if j == 0 { width + ed } else { vw };
                    push(format!("view.{j}"), fan_in, vw, true)
                })
                .collect();
            let fan_in = if arch.view_branch_depth > 0 {
                vw
            } else {
                width + ed
            };
            (branch, push("rgb".into(), fan_in, 3, false))
        }
        Variant::VanillaSymmetric => {
            let branch: Vec<Dense> = (0..arch.trunk_depth)
                .map(|i| {
                    let fan_in = if i == 0 {
                        ex + ed
                    } else if arch.skip_layers.contains(&i) {
                        width + ex + ed
                    } else {
                        width
                    };
                    push(format!("color.{i}"), fan_in, width, true)
                })
                .collect();
            (branch, push("rgb".into(), width, 3, false))
        }
    };
    (
        Layout {
            trunk,
            sigma,
            branch,
            rgb,
        },
        decls,
    )
}

/// One radiance field: density and view-dependent color networks.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldModel {
    pub arch: FieldArchitecture,
    pub params: Vec<ParamArray>,
    pub frozen_opacity: Option<FrozenOpacity>,
}

/// Gradient arrays aligned with [`FieldModel::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub grads: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(model: &FieldModel) -> Self {
        Self {
            grads: model.params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.grads
            .iter_mut()
            .flat_map(|g| g.iter_mut())
            .for_each(|x| *x *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.grads.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Batched field outputs: `sigma[i]` and `color[3i..3i+3]` for sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOutput {
    pub sigma: Vec<f64>,
    pub color: Vec<f64>,
}

/// Everything a forward pass keeps for the matching backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    arch: FieldArchitecture,
    param_count: usize,
    n: usize,
    enc_pos: Vec<f64>,
    enc_dir: Vec<f64>,
    trunk: Vec<Vec<f64>>,
    sigma_pre: Vec<f64>,
    branch: Vec<Vec<f64>>,
    color: Vec<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl FieldModel {
    /// Fan-in scaled uniform weights, zero biases; deterministic per seed.
    pub fn init(arch: FieldArchitecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, decls) = plan(&arch);
        let params = decls
            .into_iter()
            .map(|(name, shape, bound)| {
                let len = shape.iter().product();
                let data = if bound > 0.0 {
                    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
                } else {
                    vec![0.0; len]
                };
                ParamArray { name, shape, data }
            })
            .collect();
        Ok(Self {
            arch,
            params,
            frozen_opacity: None,
        })
    }

    pub fn zeros(arch: FieldArchitecture) -> Result<Self> {
        let mut m = Self::init(arch, 0)?;
        m.params
            .iter_mut()
            .for_each(|p| p.data.iter_mut().for_each(|x| *x = 0.0));
        Ok(m)
    }

    pub fn with_frozen_opacity(mut self, frozen: FrozenOpacity) -> Self {
        self.frozen_opacity = Some(frozen);
        self
    }

    pub fn param(&self, name: &str) -> Option<&ParamArray> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut ParamArray> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Indices of the parameters that only feed the density head.
    pub fn sigma_path_params(&self) -> Vec<usize> {
        let (layout, _) = plan(&self.arch);
        vec![layout.sigma.w, layout.sigma.b]
    }

    /// Checks parameter names and shapes against the architecture.
    pub fn check_consistent(&self) -> Result<()> {
        self.arch.validate()?;
        let (_, decls) = plan(&self.arch);
        if decls.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameter arrays, found {}",
                decls.len(),
                self.params.len()
            )));
        }
        for ((name, shape, _), p) in decls.iter().zip(&self.params) {
            if *name != p.name || *shape != p.shape || p.data.len() != shape.iter().product::<usize>() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter {} has shape {:?}, expected {name} {shape:?}",
                    p.name, p.shape
                )));
            }
            if !p.data.iter().all(|x| x.is_finite()) {
                return Err(Error::ShapeMismatch(format!("parameter {name} is not finite")));
            }
        }
        Ok(())
    }

    fn w(&self, d: Dense) -> (&[f64], &[f64]) {
        (&self.params[d.w].data, &self.params[d.b].data)
    }

    /// Batched forward pass over `n` samples.
    ///
    /// `positions` holds `n * position_dim` values, `directions` holds `3n`
    /// unit vectors.
    pub fn forward_batch(&self, positions: &[f64], directions: &[f64]) -> Result<(FieldOutput, Trace)> {
        let arch = &self.arch;
        let pd = arch.position_dim();
        if !directions.len().is_multiple_of(3) {
            return Err(Error::ShapeMismatch(format!(
                "direction buffer length {} not a multiple of 3",
                directions.len()
            )));
        }
        let n = directions.len() / 3;
        if positions.len() != n * pd {
            return Err(Error::ShapeMismatch(format!(
                "{} position values for {n} samples of dimension {pd}",
                positions.len()
            )));
        }
        let (layout, decls) = plan(arch);
        if decls.len() != self.params.len() {
            return Err(Error::ShapeMismatch("parameter list does not match architecture".into()));
        }

        let ex = arch.encoded_position_dim();
        let ed = arch.encoded_direction_dim();
        let mut enc_pos = vec![0.0; n * ex];
        let mut enc_dir = vec![0.0; n * ed];
        let scale = match arch.input_kind {
            InputKind::Euclidean3d => arch.position_scale,
            InputKind::InvertedSphere4d => 1.0,
        };
        let mut scaled = vec![0.0; pd];
        for i in 0..n {
            for (s, x) in scaled.iter_mut().zip(&positions[i * pd..(i + 1) * pd]) {
                *s = x * scale;
            }
            positional_encode_into(&scaled, arch.k_position, &mut enc_pos[i * ex..(i + 1) * ex]);
            positional_encode_into(
                &directions[i * 3..i * 3 + 3],
                arch.k_direction,
                &mut enc_dir[i * ed..(i + 1) * ed],
            );
        }

        let width = arch.trunk_width;
        let mut trunk: Vec<Vec<f64>> = Vec::with_capacity(layout.trunk.len());
        for (i, &d) in layout.trunk.iter().enumerate() {
            let (w, b) = self.w(d);
            let mut h = if i == 0 {
                linear_forward(n, &[(&enc_pos, ex)], w, b, d.outputs)
            } else if arch.skip_layers.contains(&i) {
                linear_forward(n, &[(&trunk[i - 1], width), (&enc_pos, ex)], w, b, d.outputs)
            } else {
                linear_forward(n, &[(&trunk[i - 1], width)], w, b, d.outputs)
            };
            relu_inplace(&mut h);
            trunk.push(h);
        }
        let feat = trunk.last().expect("trunk depth validated");

        let (sigma, sigma_pre) = match &self.frozen_opacity {
            Some(frozen) => (
                positions.chunks_exact(pd).map(|p| frozen.density(p)).collect(),
                Vec::new(),
            ),
            None => {
                let (w, b) = self.w(layout.sigma);
                let pre = linear_forward(n, &[(feat, width)], w, b, 1);
                (pre.iter().map(|&x| softplus(x)).collect(), pre)
            }
        };

        let mut branch: Vec<Vec<f64>> = Vec::with_capacity(layout.branch.len());
        let rgb_pre = match arch.variant {
            Variant::NerfAsymmetric => {
                let vw = arch.view_branch_width;
                for (j, &d) in layout.branch.iter().enumerate() {
                    let (w, b) = self.w(d);
                    let mut v = if j == 0 {
                        linear_forward(n, &[(feat, width), (&enc_dir, ed)], w, b, d.outputs)
                    } else {
                        linear_forward(n, &[(&branch[j - 1], vw)], w, b, d.outputs)
                    };
                    relu_inplace(&mut v);
                    branch.push(v);
                }
                let (w, b) = self.w(layout.rgb);
                match branch.last() {
                    Some(v) => linear_forward(n, &[(v, vw)], w, b, 3),
                    None => linear_forward(n, &[(feat, width), (&enc_dir, ed)], w, b, 3),
                }
            }
            Variant::VanillaSymmetric => {
                branch = color_net_forward(
                    self,
                    &layout,
                    n,
                    (&enc_pos, ex),
                    (&enc_dir, ed),
                );
                let (w, b) = self.w(layout.rgb);
                linear_forward(n, &[(branch.last().expect("depth validated"), width)], w, b, 3)
            }
        };
        let color: Vec<f64> = rgb_pre.iter().map(|&x| sigmoid(x)).collect();

        let out = FieldOutput {
            sigma,
            color: color.clone(),
        };
        let trace = Trace {
            arch: arch.clone(),
            param_count: self.params.len(),
            n,
            enc_pos,
            enc_dir,
            trunk,
            sigma_pre,
            branch,
            color,
        };
        Ok((out, trace))
    }

    /// Exact gradient of `sum_i d_sigma[i] * sigma_i + d_color[i] . color_i`.
    pub fn backward_batch(&self, trace: &Trace, d_sigma: &[f64], d_color: &[f64]) -> Result<GradientSet> {
        let mut grads = GradientSet::zeros_like(self);
        self.backward_batch_into(trace, d_sigma, d_color, &mut grads)?;
        Ok(grads)
    }

    /// Like [`FieldModel::backward_batch`], accumulating into `grads`.
    pub fn backward_batch_into(
        &self,
        trace: &Trace,
        d_sigma: &[f64],
        d_color: &[f64],
        grads: &mut GradientSet,
    ) -> Result<()> {
        if trace.arch != self.arch || trace.param_count != self.params.len() {
            return Err(Error::TraceMismatch("trace was recorded on a different architecture".into()));
        }
        if (trace.sigma_pre.is_empty() && trace.n > 0) != self.frozen_opacity.is_some() {
            return Err(Error::TraceMismatch("frozen-opacity state differs from the trace".into()));
        }
        let n = trace.n;
        if d_sigma.len() != n || d_color.len() != 3 * n {
            return Err(Error::TraceMismatch(format!(
                "cotangents sized {}/{} for a trace of {n} samples",
                d_sigma.len(),
                d_color.len()
            )));
        }
        if grads.grads.len() != self.params.len() {
            return Err(Error::ShapeMismatch("gradient set does not match model".into()));
        }
        let arch = &self.arch;
        let (layout, _) = plan(arch);
        let ex = arch.encoded_position_dim();
        let ed = arch.encoded_direction_dim();
        let width = arch.trunk_width;
        let feat = trace.trunk.last().expect("trunk depth validated");

        let d_rgb_pre: Vec<f64> = d_color
            .iter()
            .zip(&trace.color)
            .map(|(g, c)| g * c * (1.0 - c))
            .collect();

        let mut d_feat = vec![0.0; n * width];

        match arch.variant {
            Variant::NerfAsymmetric => {
                let vw = arch.view_branch_width;
                let rgb_in: Vec<(&[f64], usize)> = match trace.branch.last() {
                    Some(v) => vec![(v, vw)],
                    None => vec![(feat, width), (&trace.enc_dir, ed)],
                };
                let want = [true, false];
                let mut dx =
                    self.dense_backward(layout.rgb, n, &rgb_in, &d_rgb_pre, &want[..rgb_in.len()], grads);
                let mut d_act = dx.swap_remove(0).expect("requested");
                for j in (0..layout.branch.len()).rev() {
                    let act = &trace.branch[j];
                    relu_backward_inplace(&mut d_act, act);
                    if j == 0 {
                        let inputs: [(&[f64], usize); 2] = [(feat, width), (&trace.enc_dir, ed)];
                        let mut dx =
                            self.dense_backward(layout.branch[0], n, &inputs, &d_act, &[true, false], grads);
                        d_act = dx.swap_remove(0).expect("requested");
                    } else {
                        let inputs: [(&[f64], usize); 1] = [(&trace.branch[j - 1], vw)];
                        let mut dx = self.dense_backward(layout.branch[j], n, &inputs, &d_act, &[true], grads);
                        d_act = dx.swap_remove(0).expect("requested");
                    }
                }
                // d_act is now the cotangent of the trunk feature.
                add_into(&mut d_feat, &d_act);
            }
            Variant::VanillaSymmetric => {
                let last = trace.branch.last().expect("depth validated");
                let mut dx = self.dense_backward(layout.rgb, n, &[(last, width)], &d_rgb_pre, &[true], grads);
                let mut d_act = dx.swap_remove(0).expect("requested");
                for i in (0..layout.branch.len()).rev() {
                    relu_backward_inplace(&mut d_act, &trace.branch[i]);
                    if i == 0 {
                        let inputs: [(&[f64], usize); 2] = [(&trace.enc_pos, ex), (&trace.enc_dir, ed)];
                        self.dense_backward(layout.branch[0], n, &inputs, &d_act, &[false, false], grads);
                        break;
                    }
                    let prev = &trace.branch[i - 1];
                    let mut dx = if arch.skip_layers.contains(&i) {
                        let inputs: [(&[f64], usize); 3] =
                            [(prev, width), (&trace.enc_pos, ex), (&trace.enc_dir, ed)];
                        self.dense_backward(layout.branch[i], n, &inputs, &d_act, &[true, false, false], grads)
                    } else {
                        self.dense_backward(layout.branch[i], n, &[(prev, width)], &d_act, &[true], grads)
                    };
                    d_act = dx.swap_remove(0).expect("requested");
                }
            }
        }

        if self.frozen_opacity.is_none() {
            let d_pre: Vec<f64> = d_sigma
                .iter()
                .zip(&trace.sigma_pre)
                .map(|(g, &x)| g * sigmoid(x))
                .collect();
            let mut dx = self.dense_backward(layout.sigma, n, &[(feat, width)], &d_pre, &[true], grads);
            add_into(&mut d_feat, &dx.swap_remove(0).expect("requested"));
        }

        let mut d_act = d_feat;
        for i in (0..layout.trunk.len()).rev() {
            relu_backward_inplace(&mut d_act, &trace.trunk[i]);
            if i == 0 {
                self.dense_backward(layout.trunk[0], n, &[(&trace.enc_pos, ex)], &d_act, &[false], grads);
                break;
            }
            let prev = &trace.trunk[i - 1];
            let mut dx = if arch.skip_layers.contains(&i) {
                let inputs: [(&[f64], usize); 2] = [(prev, width), (&trace.enc_pos, ex)];
                self.dense_backward(layout.trunk[i], n, &inputs, &d_act, &[true, false], grads)
            } else {
                self.dense_backward(layout.trunk[i], n, &[(prev, width)], &d_act, &[true], grads)
            };
            d_act = dx.swap_remove(0).expect("requested");
        }
        Ok(())
    }

    fn dense_backward(
        &self,
        d: Dense,
        n: usize,
        inputs: &[(&[f64], usize)],
        dy: &[f64],
        want_dx: &[bool],
        grads: &mut GradientSet,
    ) -> Vec<Option<Vec<f64>>> {
        let (gw, gb) = two_mut(&mut grads.grads, d.w, d.b);
        linear_backward(n, inputs, &self.params[d.w].data, dy, d.outputs, gw, gb, want_dx)
    }
}

fn color_net_forward(
    model: &FieldModel,
    layout: &Layout,
    n: usize,
    first: (&[f64], usize),
    second: (&[f64], usize),
) -> Vec<Vec<f64>> {
    let width = model.arch.trunk_width;
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layout.branch.len());
    for (i, &d) in layout.branch.iter().enumerate() {
        let (w, b) = model.w(d);
        let mut g = if i == 0 {
            linear_forward(n, &[first, second], w, b, d.outputs)
        } else if model.arch.skip_layers.contains(&i) {
            linear_forward(n, &[(&acts[i - 1], width), first, second], w, b, d.outputs)
        } else {
            linear_forward(n, &[(&acts[i - 1], width)], w, b, d.outputs)
        };
        relu_inplace(&mut g);
        acts.push(g);
    }
    acts
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

fn two_mut(v: &mut [Vec<f64>], a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
    assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

/// Single-sample forward pass.
pub fn field_forward(model: &FieldModel, position: &[f64], direction: &Vec3) -> Result<(f64, [f64; 3], Trace)> {
    if position.len() != model.arch.position_dim() {
        return Err(Error::ShapeMismatch(format!(
            "position of dimension {} for input kind {:?}",
            position.len(),
            model.arch.input_kind
        )));
    }
    let (out, trace) = model.forward_batch(position, direction.as_slice())?;
    Ok((out.sigma[0], [out.color[0], out.color[1], out.color[2]], trace))
}

/// Gradient of `d_sigma * sigma + d_color . color` for a single-sample trace.
pub fn field_backward(model: &FieldModel, trace: &Trace, d_sigma: f64, d_color: [f64; 3]) -> Result<GradientSet> {
    model.backward_batch(trace, &[d_sigma], &d_color)
}
