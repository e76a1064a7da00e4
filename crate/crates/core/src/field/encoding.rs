/// Output length of [`positional_encode`] for a `dim`-vector at max exponent `k`.
pub const fn encoded_len(dim: usize, k: usize) -> usize {
    2 * (k + 1) * dim
}

/// Fourier features `(sin 2^0 p, cos 2^0 p, ..., sin 2^k p, cos 2^k p)`,
/// each block componentwise over `p`.
pub fn positional_encode(p: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; encoded_len(p.len(), k)];
    positional_encode_into(p, k, &mut out);
    out
}

pub(crate) fn positional_encode_into(p: &[f64], k: usize, out: &mut [f64]) {
    let dim = p.len();
    debug_assert_eq!(out.len(), encoded_len(dim, k));
    let mut freq = 1.0;
    for level in 0..=k {
        let base = 2 * level * dim;
        for (i, &x) in p.iter().enumerate() {
            let (s, c) = (freq * x).sin_cos();
            out[base + i] = s;
            out[base + dim + i] = c;
        }
        freq *= 2.0;
    }
}
