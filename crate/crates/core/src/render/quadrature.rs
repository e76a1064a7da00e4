use rand::Rng;

use crate::error::{Error, Result};

/// Floor added to every coarse weight before inverse-CDF sampling.
pub const IMPORTANCE_EPS: f64 = 1e-5;

/// Ordered samples along one ray segment and their compositing terms.
#[derive(Debug, Clone, PartialEq)]
pub struct RayQuadrature {
    /// Depth for the inner segment, inverse radius for the outer one.
    pub t_values: Vec<f64>,
    pub deltas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
    pub alphas: Vec<f64>,
    pub transmittances: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RayQuadrature {
    pub fn color(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for (w, col) in self.weights.iter().zip(&self.colors) {
            for k in 0..3 {
                c[k] += w * col[k];
            }
        }
        c
    }

    /// Transmittance past the last sample.
    pub fn final_transmittance(&self, incoming: f64) -> f64 {
        match (self.transmittances.last(), self.alphas.last()) {
            (Some(t), Some(a)) => t * (1.0 - a),
            _ => incoming,
        }
    }
}

/// `n` ascending samples in `[t_near, t_far]`: bin midpoints, or one uniform
/// draw per bin when `rng` is given.
pub fn sample_segment<R: Rng + ?Sized>(t_near: f64, t_far: f64, n: usize, rng: Option<&mut R>) -> Result<Vec<f64>> {
    if !(t_near < t_far) {
        return Err(Error::EmptyInterval(t_near, t_far));
    }
    let width = (t_far - t_near) / n as f64;
    let mut out = Vec::with_capacity(n);
    match rng {
        Some(rng) => {
            for i in 0..n {
                let u: f64 = rng.random_range(0.0..1.0);
                out.push((t_near + (i as f64 + u) * width).min(t_far));
            }
        }
        None => out.extend((0..n).map(|i| t_near + (i as f64 + 0.5) * width)),
    }
    Ok(out)
}

/// Cell boundaries around ascending `samples`: the interval ends plus the
/// midpoints between neighbours.
pub fn cell_edges(t_near: f64, t_far: f64, samples: &[f64]) -> Vec<f64> {
    let mut edges = Vec::with_capacity(samples.len() + 1);
    edges.push(t_near);
    edges.extend(samples.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    edges.push(t_far);
    edges
}

/// Width of the cell each sample represents; sums to `t_far - t_near`.
pub fn cell_widths(t_near: f64, t_far: f64, samples: &[f64]) -> Vec<f64> {
    cell_edges(t_near, t_far, samples).windows(2).map(|w| w[1] - w[0]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeWeights {
    pub alphas: Vec<f64>,
    pub transmittances: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn quadrature_weights(sigmas: &[f64], deltas: &[f64], incoming_t: f64) -> Result<CompositeWeights> {
    if sigmas.len() != deltas.len() {
        return Err(Error::LengthMismatch(format!(
            "{} densities, {} step sizes",
            sigmas.len(),
            deltas.len()
        )));
    }
    let n = sigmas.len();
    let mut out = CompositeWeights {
        alphas: Vec::with_capacity(n),
        transmittances: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
    };
    let mut t = incoming_t;
    for (s, d) in sigmas.iter().zip(deltas) {
        let a = -(-s * d).exp_m1();
        out.alphas.push(a);
        out.transmittances.push(t);
        out.weights.push(t * a);
        t *= 1.0 - a;
    }
    Ok(out)
}

/// Inverse-CDF samples from the piecewise-constant density proportional to
/// `coarse_weights + IMPORTANCE_EPS` over `bin_edges`.
///
/// Quantiles are stratified: `(i + u_i) / n`, with `u_i = 0.5` when `rng` is
/// absent, so the output is ascending.
pub fn importance_sample<R: Rng + ?Sized>(
    bin_edges: &[f64],
    coarse_weights: &[f64],
    n: usize,
    rng: Option<&mut R>,
) -> Result<Vec<f64>> {
    if bin_edges.len() < 2 || coarse_weights.len() + 1 != bin_edges.len() {
        return Err(Error::DegenerateBins(format!(
            "{} edges for {} weights",
            bin_edges.len(),
            coarse_weights.len()
        )));
    }
    if bin_edges.windows(2).any(|w| !(w[0] < w[1])) || bin_edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::DegenerateBins("edges must be finite and strictly ascending".into()));
    }
    if coarse_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::DegenerateBins("weights must be finite and non-negative".into()));
    }
    let mass: Vec<f64> = coarse_weights.iter().map(|w| w + IMPORTANCE_EPS).collect();
    let total: f64 = mass.iter().sum();
    let mut cdf = Vec::with_capacity(mass.len() + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for m in &mass {
        acc += m / total;
        cdf.push(acc);
    }

    let mut rng = rng;
    let mut out = Vec::with_capacity(n);
    let mut bin = 0;
    for i in 0..n {
        let jitter = match rng.as_deref_mut() {
            Some(r) => r.random_range(0.0..1.0),
            None => 0.5,
        };
        let u = ((i as f64 + jitter) / n as f64).min(acc);
        while bin + 1 < mass.len() && cdf[bin + 1] <= u {
            bin += 1;
        }
        let frac = ((u - cdf[bin]) / (cdf[bin + 1] - cdf[bin])).clamp(0.0, 1.0);
        out.push(bin_edges[bin] + frac * (bin_edges[bin + 1] - bin_edges[bin]));
    }
    Ok(out)
}

/// Sorted union of two ascending sample lists.
pub fn merge_sorted(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const NO_RNG: Option<&mut ChaCha8Rng> = None;

    #[test]
    fn midpoints_and_stratification() {
        assert_eq!(sample_segment(0.0, 1.0, 2, NO_RNG).unwrap(), vec![0.25, 0.75]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_segment(0.0, 1.0, 4, Some(&mut rng)).unwrap();
        for (i, t) in s.iter().enumerate() {
            assert!(*t >= i as f64 / 4.0 && *t < (i + 1) as f64 / 4.0);
        }
        assert!(matches!(sample_segment(0.5, 0.5, 3, NO_RNG), Err(Error::EmptyInterval(..))));
    }

    #[test]
    fn weights_hand_examples() {
        let q = quadrature_weights(&[0.0], &[1.0], 1.0).unwrap();
        assert_eq!(q.alphas, vec![0.0]);
        assert_eq!(q.weights, vec![0.0]);

        let ln2 = std::f64::consts::LN_2;
        let q = quadrature_weights(&[ln2], &[1.0], 1.0).unwrap();
        assert_abs_diff_eq!(q.alphas[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(q.weights[0], 0.5, epsilon = 1e-15);

        let q = quadrature_weights(&[ln2, 2.0 * ln2], &[1.0, 0.5], 1.0).unwrap();
        assert_abs_diff_eq!(q.weights[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(q.weights[1], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(q.transmittances[1] * (1.0 - q.alphas[1]), 0.25, epsilon = 1e-15);

        assert!(matches!(quadrature_weights(&[1.0], &[], 1.0), Err(Error::LengthMismatch(_))));
    }

    #[test]
    fn importance_single_bin() {
        let s = importance_sample(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 0.0], 1, NO_RNG).unwrap();
        assert!((1.0..=2.0).contains(&s[0]));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = importance_sample(&[0.0, 1.0, 2.0, 3.0, 4.0], &[0.0, 0.0, 3.0, 0.0], 64, Some(&mut rng)).unwrap();
        assert!(s.iter().all(|t| (2.0..=3.0).contains(t)));
    }

    #[test]
    fn importance_errors() {
        assert!(importance_sample(&[0.0, 1.0], &[1.0, 1.0], 4, NO_RNG).is_err());
        assert!(importance_sample(&[0.0, 0.0], &[1.0], 4, NO_RNG).is_err());
        assert!(importance_sample(&[0.0, 1.0], &[-1.0], 4, NO_RNG).is_err());
        assert!(importance_sample(&[0.0], &[], 4, NO_RNG).is_err());
    }

    #[test]
    fn importance_uniform_weights_match_uniform_cdf() {
        let edges: Vec<f64> = (0..=16).map(|i| i as f64 / 16.0).collect();
        let w = vec![0.3; 16];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = importance_sample(&edges, &w, 10_000, Some(&mut rng)).unwrap();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        let ks = s
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max((x - (i + 1) as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.05, "KS distance {ks}");
    }

    #[test]
    fn cell_widths_cover_interval() {
        let w = cell_widths(1.0, 3.0, &[1.5, 2.0, 2.8]);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-15);
        for (a, b) in w.iter().zip([0.75, 0.65, 0.6]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn quadrature_invariants(
            sigmas in prop::collection::vec(0.0f64..50.0, 1..40),
            incoming in 0.0f64..=1.0,
            delta in 1e-4f64..0.5,
        ) {
            let deltas = vec![delta; sigmas.len()];
            let q = quadrature_weights(&sigmas, &deltas, incoming).unwrap();
            prop_assert!(q.alphas.iter().all(|a| (0.0..=1.0).contains(a)));
            prop_assert_eq!(q.transmittances[0], incoming);
            prop_assert!(q.transmittances.windows(2).all(|w| w[1] <= w[0]));
            let total: f64 = q.weights.iter().sum();
            prop_assert!(total <= incoming + 1e-9);
        }

        #[test]
        fn importance_samples_sorted_and_inside(
            weights in prop::collection::vec(0.0f64..5.0, 1..30),
            n in 1usize..100,
            seed in any::<u64>(),
        ) {
            let edges: Vec<f64> = (0..=weights.len()).map(|i| (i as f64).powf(1.3)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = importance_sample(&edges, &weights, n, Some(&mut rng)).unwrap();
            prop_assert_eq!(s.len(), n);
            prop_assert!(s.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(s.iter().all(|t| *t >= edges[0] && *t <= *edges.last().unwrap()));
        }
    }
}
