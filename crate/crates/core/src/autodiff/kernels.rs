//! Inner loops for the convolution and reductions. Slices are contiguous so
//! the compiler can vectorize the axpy; the dot product keeps four partial
//! sums for the same reason, in a fixed order so results are reproducible.

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..n {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Valid dilated cross-correlation:
/// `out[o, t] = bias[o] + sum_{i,k} w[o, i, k] * x[i, t + k * dilation]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_forward(
    x: &[f64],
    c_in: usize,
    t_in: usize,
    w: &[f64],
    bias: &[f64],
    c_out: usize,
    kernel: usize,
    dilation: usize,
    out: &mut [f64],
) {
    let t_out = t_in - dilation * (kernel - 1);
    for o in 0..c_out {
        let row = &mut out[o * t_out..(o + 1) * t_out];
        row.fill(bias[o]);
        for i in 0..c_in {
            let xrow = &x[i * t_in..(i + 1) * t_in];
            let taps = &w[(o * c_in + i) * kernel..(o * c_in + i + 1) * kernel];
            for (k, &wv) in taps.iter().enumerate() {
                let off = k * dilation;
                axpy(wv, &xrow[off..off + t_out], row);
            }
        }
    }
}

/// Accumulates input, weight and bias gradients of [`conv1d_forward`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_backward(
    x: &[f64],
    c_in: usize,
    t_in: usize,
    w: &[f64],
    c_out: usize,
    kernel: usize,
    dilation: usize,
    grad_out: &[f64],
    grad_x: &mut [f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) {
    let t_out = t_in - dilation * (kernel - 1);
    for o in 0..c_out {
        let g = &grad_out[o * t_out..(o + 1) * t_out];
        grad_b[o] += g.iter().sum::<f64>();
        for i in 0..c_in {
            let xrow = &x[i * t_in..(i + 1) * t_in];
            let gx = &mut grad_x[i * t_in..(i + 1) * t_in];
            let base = (o * c_in + i) * kernel;
            for k in 0..kernel {
                let off = k * dilation;
                grad_w[base + k] += dot(g, &xrow[off..off + t_out]);
                axpy(w[base + k], g, &mut gx[off..off + t_out]);
            }
        }
    }
}
