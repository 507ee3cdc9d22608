use rand::Rng;

use crate::error::{Error, Result};
use crate::net::tensor::{matmul, Scalar, Tensor};
use crate::util::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// `y = x Wᵀ + b` with `x: (rows, features)`, `W: (units, features)`.
pub fn dense_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (&[rows, features], &[units, wf]) = (input.shape(), weight.shape()) else {
        return Err(Error::Shape(format!(
            "dense expects 2-d input and weight, got {:?} and {:?}",
            input.shape(),
            weight.shape()
        )));
    };
    if wf != features || bias.len() != units {
        return Err(Error::Shape(format!(
            "dense weight {:?} / bias {:?} do not fit input {:?}",
            weight.shape(),
            bias.shape(),
            input.shape()
        )));
    }
    let mut out = Tensor::zeros(&[rows, units]);
    for row in out.data_mut().chunks_mut(units) {
        row.copy_from_slice(bias.data());
    }
    matmul(
        input.data(),
        false,
        weight.data(),
        true,
        rows,
        features,
        units,
        out.data_mut(),
        true,
    );
    Ok(out)
}

pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (rows, features) = (input.dim(0), input.dim(1));
    let units = weight.dim(0);
    if grad_out.shape() != [rows, units] {
        return Err(Error::Shape(format!(
            "dense grad {:?}, expected [{rows}, {units}]",
            grad_out.shape()
        )));
    }
    let mut gw = Tensor::zeros(weight.shape());
    matmul(
        grad_out.data(),
        true,
        input.data(),
        false,
        units,
        rows,
        features,
        gw.data_mut(),
        false,
    );
    let mut gx = Tensor::zeros(input.shape());
    matmul(
        grad_out.data(),
        false,
        weight.data(),
        false,
        rows,
        units,
        features,
        gx.data_mut(),
        false,
    );
    let mut gb = Tensor::zeros(&[units]);
    for row in grad_out.data().chunks(units) {
        for (acc, &g) in gb.data_mut().iter_mut().zip(row) {
            *acc += g;
        }
    }
    Ok(DenseGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

/// Inverted-dropout mask: each entry is `1 / keep_p` with probability
/// `keep_p`, else 0.
pub fn dropout_mask<T: Scalar>(shape: &[usize], keep_p: f64, seed: u64) -> Tensor<T> {
    let mut r = rng(seed);
    let scale = T::of(1.0 / keep_p);
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n)
            .map(|_| {
                if r.random::<f64>() < keep_p {
                    scale
                } else {
                    T::zero()
                }
            })
            .collect(),
    )
}

/// Affine map followed by inverted dropout in training mode. Returns the mask
/// used (`None` in inference or when `keep_p == 1`).
pub fn dense_dropout_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    keep_p: f64,
    mode: Mode,
    seed: u64,
) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
    if !(keep_p > 0.0 && keep_p <= 1.0) {
        return Err(Error::Config(format!(
            "keep probability must lie in (0, 1], got {keep_p}"
        )));
    }
    let mut out = dense_forward(input, weight, bias)?;
    if mode == Mode::Eval || keep_p == 1.0 {
        return Ok((out, None));
    }
    let mask = dropout_mask::<T>(out.shape(), keep_p, seed);
    for (v, &m) in out.data_mut().iter_mut().zip(mask.data()) {
        *v *= m;
    }
    Ok((out, Some(mask)))
}

pub fn dense_dropout_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    mask: Option<&Tensor<T>>,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    match mask {
        None => dense_backward(input, weight, grad_out),
        Some(mask) => {
            let mut g = grad_out.clone();
            for (v, &m) in g.data_mut().iter_mut().zip(mask.data()) {
                *v *= m;
            }
            dense_backward(input, weight, &g)
        }
    }
}
