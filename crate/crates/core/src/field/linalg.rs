//! Dense-layer kernels over row-major sample batches.
//!
//! A layer may read several input blocks (skip connections, concatenated
//! encodings); its weight matrix is split by rows in the same order, so no
//! concatenated copy of the input is ever formed.

/// `c (m x n) = beta * c + a (m x k) * b (k x n)` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `y = sum_p x_p W_p + b` for `n` rows; `inputs` lists `(x_p, width_p)`.
pub(crate) fn linear_forward(
    n: usize,
    inputs: &[(&[f64], usize)],
    w: &[f64],
    b: &[f64],
    outputs: usize,
) -> Vec<f64> {
    let mut y = Vec::with_capacity(n * outputs);
    for _ in 0..n {
        y.extend_from_slice(b);
    }
    let mut row = 0;
    for &(x, width) in inputs {
        debug_assert_eq!(x.len(), n * width);
        let wp = &w[row * outputs..(row + width) * outputs];
        gemm(n, width, outputs, x, width, 1, wp, outputs, 1, 1.0, &mut y);
        row += width;
    }
    debug_assert_eq!(row * outputs, w.len());
    y
}

/// Accumulates weight and bias gradients; returns input cotangents for the
/// blocks flagged in `want_dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    n: usize,
    inputs: &[(&[f64], usize)],
    w: &[f64],
    dy: &[f64],
    outputs: usize,
    gw: &mut [f64],
    gb: &mut [f64],
    want_dx: &[bool],
) -> Vec<Option<Vec<f64>>> {
    debug_assert_eq!(inputs.len(), want_dx.len());
    for row in dy.chunks_exact(outputs) {
        for (g, d) in gb.iter_mut().zip(row) {
            *g += d;
        }
    }
    let mut dxs = Vec::with_capacity(inputs.len());
    let mut row = 0;
    for (&(x, width), &want) in inputs.iter().zip(want_dx) {
        let range = row * outputs..(row + width) * outputs;
        // gW_p += x_p^T dy
        gemm(width, n, outputs, x, 1, width, dy, outputs, 1, 1.0, &mut gw[range.clone()]);
        if want {
            // dx_p = dy W_p^T
            let mut dx = vec![0.0; n * width];
            gemm(n, outputs, width, dy, outputs, 1, &w[range], 1, outputs, 0.0, &mut dx);
            dxs.push(Some(dx));
        } else {
            dxs.push(None);
        }
        row += width;
    }
    dxs
}

pub(crate) fn relu_inplace(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Masks `grad` where the post-activation `act` is zero.
pub(crate) fn relu_backward_inplace(grad: &mut [f64], act: &[f64]) {
    for (g, &a) in grad.iter_mut().zip(act) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}
