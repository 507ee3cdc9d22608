use crate::error::{Error, Result};
use crate::net::tensor::{Scalar, Tensor};

/// Mean binary cross-entropy on logits against 0/1 targets, computed as
/// `max(z, 0) − z·y + ln(1 + e^{−|z|})`. Returns the loss and `∂loss/∂z`.
pub fn bce_with_logits<T: Scalar>(
    logits: &Tensor<T>,
    targets: &Tensor<T>,
) -> Result<(f64, Tensor<T>)> {
    if logits.shape() != targets.shape() {
        return Err(Error::Shape(format!(
            "logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    if let Some(bad) = targets
        .data()
        .iter()
        .find(|&&y| y != T::zero() && y != T::one())
    {
        return Err(Error::Config(format!(
            "BCE targets must be 0 or 1, got {bad:?}"
        )));
    }
    let count = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(logits.shape());
    for ((&z, &y), g) in logits
        .data()
        .iter()
        .zip(targets.data())
        .zip(grad.data_mut())
    {
        let (z, y) = (z.as_f64(), y.as_f64());
        loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        *g = T::of((sigmoid(z) - y) / count);
    }
    Ok((loss / count, grad))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (row, &l) in labels.iter().enumerate() {
        t.data_mut()[row * classes + l] = T::one();
    }
    t
}
