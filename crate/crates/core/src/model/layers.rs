//! Forward/backward kernels shared by the encoder, label encoder and joint.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::params::{LayerNorm, Linear};

pub(crate) const LN_EPS: f64 = 1e-5;

pub(crate) fn linear(x: &ArrayView2<f64>, l: &Linear) -> Array2<f64> {
    let mut y = x.dot(&l.weight);
    y += &l.bias;
    y
}

/// Accumulates weight/bias gradients and returns the input gradient.
pub(crate) fn linear_backward(
    x: &ArrayView2<f64>,
    dy: &ArrayView2<f64>,
    l: &Linear,
    grad: &mut Linear,
) -> Array2<f64> {
    grad.weight += &x.t().dot(dy);
    grad.bias += &dy.sum_axis(Axis(0));
    dy.dot(&l.weight.t())
}

pub(crate) struct NormCache {
    pub normalized: Array2<f64>,
    pub inv_std: Array1<f64>,
}

pub(crate) fn layer_norm(x: &Array2<f64>, ln: &LayerNorm) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mut normalized = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in normalized.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *s = 1.0 / (var + LN_EPS).sqrt();
        row *= *s;
    }
    let mut y = &normalized * &ln.gain;
    y += &ln.bias;
    (
        y,
        NormCache {
            normalized,
            inv_std,
        },
    )
}

pub(crate) fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    ln: &LayerNorm,
    grad: &mut LayerNorm,
) -> Array2<f64> {
    grad.gain += &(dy * &cache.normalized).sum_axis(Axis(0));
    grad.bias += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * &ln.gain;
    for ((mut row, xhat), &s) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.normalized.rows())
        .zip(cache.inv_std.iter())
    {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        for (v, &xh) in row.iter_mut().zip(xhat.iter()) {
            *v = s * (*v - mean_d - xh * mean_dx);
        }
    }
    dx
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Sinusoidal absolute position table, `frames x dim`.
pub(crate) fn positions(frames: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((frames, dim), |(t, j)| {
        let pair = (j / 2) as f64;
        let angle = t as f64 / 10000f64.powf(2.0 * pair / dim as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}
