//! Small numeric helpers shared across the model and training code.

use ndarray::{Array1, ArrayView1, ArrayViewMut2};

pub const LEAKY_SLOPE: f64 = 0.01;

/// LeakyReLU with the fixed negative slope used everywhere in the model.
#[inline]
pub fn lrelu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

/// Derivative of [`lrelu`] w.r.t. its pre-activation input.
#[inline]
pub fn lrelu_grad(pre: f64) -> f64 {
    if pre > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax over a slice, in place. Empty input is a no-op.
pub fn softmax_inplace(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// dst += u vᵀ (rank-one update), written out by hand to avoid temporaries.
pub fn add_outer<'a>(
    dst: impl Into<ArrayViewMut2<'a, f64>>,
    u: ArrayView1<f64>,
    v: ArrayView1<f64>,
) {
    let mut dst = dst.into();
    debug_assert_eq!(dst.nrows(), u.len());
    debug_assert_eq!(dst.ncols(), v.len());
    for (mut row, &ui) in dst.rows_mut().into_iter().zip(u.iter()) {
        if ui == 0.0 {
            continue;
        }
        for (d, &vj) in row.iter_mut().zip(v.iter()) {
            *d += ui * vj;
        }
    }
}

/// Apply LeakyReLU elementwise, returning the activated copy.
pub fn lrelu_arr1(x: &Array1<f64>) -> Array1<f64> {
    x.mapv(lrelu)
}
