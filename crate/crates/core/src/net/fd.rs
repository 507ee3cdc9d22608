//! Central finite differences for checking backward passes.

use rand::Rng;

use crate::net::tensor::{Scalar, Tensor};
use crate::util::rng;

pub const FD_STEP: f64 = 1e-5;

/// Entries whose analytic and numeric magnitudes both fall below this are
/// compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-5;

/// `∂f/∂x_i ≈ (f(x + h e_i) − f(x − h e_i)) / 2h` for every entry of `x`.
pub fn numeric_grad<T: Scalar>(x: &Tensor<T>, mut f: impl FnMut(&Tensor<T>) -> f64) -> Tensor<T> {
    let indices: Vec<usize> = (0..x.len()).collect();
    numeric_grad_at(x, &indices, &mut f).into_iter().fold(
        Tensor::zeros(x.shape()),
        |mut g, (i, v)| {
            g.data_mut()[i] = T::of(v);
            g
        },
    )
}

/// Central differences at selected flat indices only.
pub fn numeric_grad_at<T: Scalar>(
    x: &Tensor<T>,
    indices: &[usize],
    mut f: impl FnMut(&Tensor<T>) -> f64,
) -> Vec<(usize, f64)> {
    let mut probe = x.clone();
    indices
        .iter()
        .map(|&i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + T::of(FD_STEP);
            let plus = f(&probe);
            probe.data_mut()[i] = orig - T::of(FD_STEP);
            let minus = f(&probe);
            probe.data_mut()[i] = orig;
            (i, (plus - minus) / (2.0 * FD_STEP))
        })
        .collect()
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

pub fn max_relative_error<T: Scalar>(analytic: &Tensor<T>, numeric: &Tensor<T>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes");
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| relative_error(a.as_f64(), n.as_f64()))
        .fold(0.0, f64::max)
}

/// Uniform entries in `[-1, 1)` from a fixed seed.
pub fn random_tensor<T: Scalar>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n).map(|_| T::of(r.random_range(-1.0..1.0))).collect(),
    )
}
