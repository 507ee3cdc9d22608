use crate::error::{Error, Result};
use crate::net::tensor::{Scalar, Tensor};

/// Per-channel normalization over batch and spatial axes. Works on any
/// `(N, C, ...)` tensor, so the FC block uses it with shape `(rows, units)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    x_hat: Vec<T>,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
    shape: Vec<usize>,
}

pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

fn layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::Shape(format!(
            "batchnorm needs (N, C, ...), got {shape:?}"
        )));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Self {
        Self {
            gamma: Tensor::filled(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], T::one()),
            momentum,
            eps,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, c: usize) -> Result<()> {
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "batchnorm has {} channels, input has {c}",
                self.channels()
            )));
        }
        Ok(())
    }

    /// Normalizes with batch statistics (biased variance) and folds them into
    /// the running estimates.
    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        self.check(layout(input.shape())?.1)?;
        let (out, cache) = batchnorm_train(input, &self.gamma, &self.beta, self.eps)?;
        self.update_running(&cache);
        Ok((out, cache))
    }

    /// `r ← (1 − momentum)·r + momentum·batch_stat` for mean and variance.
    pub fn update_running(&mut self, cache: &BatchNormCache<T>) {
        let m = self.momentum;
        for c in 0..self.channels() {
            let rm = &mut self.running_mean.data_mut()[c];
            *rm = T::of((1.0 - m) * rm.as_f64() + m * cache.mean[c]);
            let rv = &mut self.running_var.data_mut()[c];
            *rv = T::of((1.0 - m) * rv.as_f64() + m * cache.var[c]);
        }
    }

    pub fn forward_eval(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, s) = layout(input.shape())?;
        self.check(c)?;
        let mut out = input.clone();
        for ch in 0..c {
            let inv = 1.0 / (self.running_var.data()[ch].as_f64() + self.eps).sqrt();
            let scale = T::of(self.gamma.data()[ch].as_f64() * inv);
            let shift = T::of(
                self.beta.data()[ch].as_f64()
                    - self.running_mean.data()[ch].as_f64() * self.gamma.data()[ch].as_f64() * inv,
            );
            for b in 0..n {
                for v in &mut out.data_mut()[(b * c + ch) * s..(b * c + ch + 1) * s] {
                    *v = *v * scale + shift;
                }
            }
        }
        Ok(out)
    }
}

/// Sum with four interleaved accumulators (fixed order, so deterministic).
fn lane_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = [0.0; 4];
    for (i, v) in values.enumerate() {
        acc[i & 3] += v;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// Training-mode normalization without touching running statistics.
pub fn batchnorm_train<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let (n, c, s) = layout(input.shape())?;
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Shape(format!(
            "batchnorm affine params do not match {c} channels"
        )));
    }
    let count = n * s;
    if count < 2 {
        return Err(Error::Shape(format!(
            "training-mode batchnorm needs at least 2 values per channel, got {count}"
        )));
    }
    let x = input.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    let planes = |ch: usize| (0..n).map(move |b| (b * c + ch) * s..(b * c + ch + 1) * s);
    for ch in 0..c {
        let sum: f64 = planes(ch)
            .map(|r| lane_sum(x[r].iter().map(|v| v.as_f64())))
            .sum();
        let mu = sum / count as f64;
        let sq: f64 = planes(ch)
            .map(|r| lane_sum(x[r].iter().map(|v| (v.as_f64() - mu).powi(2))))
            .sum();
        mean[ch] = mu;
        var[ch] = sq / count as f64;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut x_hat = vec![T::zero(); x.len()];
    let mut out = Tensor::zeros(input.shape());
    for ch in 0..c {
        let (mu, inv) = (mean[ch], inv_std[ch]);
        let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
        for r in planes(ch) {
            for ((xh, o), &v) in x_hat[r.clone()]
                .iter_mut()
                .zip(&mut out.data_mut()[r.clone()])
                .zip(&x[r])
            {
                *xh = T::of((v.as_f64() - mu) * inv);
                *o = g * *xh + bt;
            }
        }
    }
    Ok((
        out,
        BatchNormCache {
            x_hat,
            inv_std,
            mean,
            var,
            shape: input.shape().to_vec(),
        },
    ))
}

pub fn batchnorm_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    if grad_out.shape() != cache.shape.as_slice() {
        return Err(Error::Shape(format!(
            "batchnorm grad {:?} vs forward {:?}",
            grad_out.shape(),
            cache.shape
        )));
    }
    let (n, c, s) = layout(&cache.shape)?;
    let count = (n * s) as f64;
    let dy = grad_out.data();
    let planes = |ch: usize| (0..n).map(move |b| (b * c + ch) * s..(b * c + ch + 1) * s);
    let mut d_gamma = vec![0.0; c];
    let mut d_beta = vec![0.0; c];
    let mut dx = Tensor::zeros(&cache.shape);
    for ch in 0..c {
        for r in planes(ch) {
            d_beta[ch] += lane_sum(dy[r.clone()].iter().map(|g| g.as_f64()));
            d_gamma[ch] += lane_sum(
                dy[r.clone()]
                    .iter()
                    .zip(&cache.x_hat[r])
                    .map(|(g, xh)| g.as_f64() * xh.as_f64()),
            );
        }
        let k = gamma.data()[ch].as_f64() * cache.inv_std[ch] / count;
        let (db, dg) = (d_beta[ch], d_gamma[ch]);
        for r in planes(ch) {
            for ((o, &g), &xh) in dx.data_mut()[r.clone()]
                .iter_mut()
                .zip(&dy[r.clone()])
                .zip(&cache.x_hat[r])
            {
                *o = T::of(k * (count * g.as_f64() - db - xh.as_f64() * dg));
            }
        }
    }
    Ok(BatchNormGrads {
        input: dx,
        gamma: Tensor::from_f64(&[c], &d_gamma),
        beta: Tensor::from_f64(&[c], &d_beta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::testutil::{check_close, numeric_grad, random_tensor};

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let mut bn = BatchNorm::<f64>::new(2, 0.1, 1e-5);
        let input = Tensor::filled(&[3, 2, 2, 2], 4.0);
        let (out, _) = bn.forward_train(&input).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_moments_are_standardized() {
        let mut bn = BatchNorm::<f64>::new(3, 0.1, 1e-5);
        let input = random_tensor::<f64>(&[4, 3, 5, 5], 1).map(|x| 10.0 * x + 1.0);
        let (out, _) = bn.forward_train(&input).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|b| out.data()[(b * 3 + ch) * 25..(b * 3 + ch + 1) * 25].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-10);
            // eps shrinks the variance by eps / (sigma^2 + eps), ~3e-7 here.
            assert!((var - 1.0).abs() < 1e-6, "var {var}");
        }
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut bn = BatchNorm::<f64>::new(1, 0.1, 1e-5);
        let input = Tensor::from_vec(&[4, 1], vec![1.0, 2.0, 3.0, 6.0]);
        bn.forward_train(&input).unwrap();
        assert!((bn.running_mean.data()[0] - 0.3).abs() < 1e-15);
        assert!((bn.running_var.data()[0] - (0.9 + 0.1 * 3.5)).abs() < 1e-15);
        let eval = bn.forward_eval(&input).unwrap();
        let expected = (1.0 - 0.3) / (1.25f64 + 1e-5).sqrt();
        assert!((eval.data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn single_element_training_is_an_error() {
        let mut bn = BatchNorm::<f64>::new(2, 0.1, 1e-5);
        assert!(bn.forward_train(&Tensor::zeros(&[1, 2])).is_err());
        assert!(bn.forward_eval(&Tensor::zeros(&[1, 2])).is_ok());
    }

    #[test]
    fn gradients_match_central_differences() {
        let input = random_tensor::<f64>(&[3, 2, 3, 3], 2);
        let gamma = random_tensor::<f64>(&[2], 3).map(|g| g + 1.5);
        let beta = random_tensor::<f64>(&[2], 4);
        let probe = random_tensor::<f64>(&[3, 2, 3, 3], 5);
        let (_, cache) = batchnorm_train(&input, &gamma, &beta, 1e-5).unwrap();
        let grads = batchnorm_backward(&cache, &gamma, &probe).unwrap();
        let loss = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| {
            batchnorm_train(x, g, b, 1e-5).unwrap().0.dot(&probe)
        };
        check_close(
            &grads.input,
            &numeric_grad(&input, |x| loss(x, &gamma, &beta)),
            1e-4,
        );
        check_close(
            &grads.gamma,
            &numeric_grad(&gamma, |g| loss(&input, g, &beta)),
            1e-4,
        );
        check_close(
            &grads.beta,
            &numeric_grad(&beta, |b| loss(&input, &gamma, b)),
            1e-4,
        );
    }
}
