//! Adam with coupled L2 weight decay, and the step learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coefficient of the L2 term added to every gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !unit(self.beta1)
            || !unit(self.beta2)
            || !(self.eps > 0.0)
            || !(self.weight_decay >= 0.0)
        {
            return Err(Error::Config(format!(
                "invalid Adam hyperparameters {self:?}"
            )));
        }
        Ok(())
    }
}

/// First and second moments per parameter plus the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> Adam<T> {
    /// Zero moments shaped like `shapes`.
    pub fn new(config: AdamConfig, shapes: &[&[usize]]) -> Self {
        Self {
            config,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            t: 0,
        }
    }

    /// One update of every parameter. Non-finite gradients reject the whole
    /// step before anything is modified.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<T>],
        grads: &[Tensor<T>],
        lr: f64,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "Adam tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if !(lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            if p.shape() != g.shape() || g.shape() != m.shape() {
                return Err(Error::Shape(format!(
                    "tensor {i}: param {:?}, grad {:?}, state {:?}",
                    p.shape(),
                    g.shape(),
                    m.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of tensor {i}")));
            }
        }
        self.t += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let x = pi.as_f64();
                let g = gi.as_f64() + weight_decay * x;
                let mn = beta1 * mi.as_f64() + (1.0 - beta1) * g;
                let vn = beta2 * vi.as_f64() + (1.0 - beta2) * g * g;
                *mi = T::of(mn);
                *vi = T::of(vn);
                let m_hat = mn / c1;
                let v_hat = vn / c2;
                *pi = T::of(x - lr * m_hat / (v_hat.sqrt() + eps));
            }
        }
        Ok(())
    }
}

/// `base_lr · decay^⌊epoch / period⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay: f64,
    pub period: u32,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base_lr: 1e-5,
            decay: 0.1,
            period: 30,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) || self.period == 0 {
            return Err(Error::Config(format!(
                "invalid learning-rate schedule {self:?}"
            )));
        }
        Ok(())
    }

    /// The product is rounded to 15 significant digits, so a decimal base
    /// and decay give the decimal result (`1e-5 · 0.1` is exactly `1e-6`).
    /// Never returns less than the smallest normal `f64`.
    pub fn lr_at_epoch(&self, epoch: u32) -> f64 {
        let k = (epoch / self.period) as i32;
        let raw = self.base_lr * self.decay.powi(k);
        let rounded: f64 = format!("{raw:.14e}")
            .parse()
            .expect("formatted float parses");
        rounded.max(f64::MIN_POSITIVE)
    }
}
