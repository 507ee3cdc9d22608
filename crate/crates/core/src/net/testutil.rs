use crate::net::fd::max_relative_error;
use crate::net::tensor::{Scalar, Tensor};

pub(crate) use crate::net::fd::{numeric_grad, random_tensor};

pub(crate) fn check_close<T: Scalar>(analytic: &Tensor<T>, numeric: &Tensor<T>, tol: f64) {
    let err = max_relative_error(analytic, numeric);
    assert!(err < tol, "max relative error {err:e} exceeds {tol:e}");
}
