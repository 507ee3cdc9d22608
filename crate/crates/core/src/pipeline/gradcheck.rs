//! Finite-difference checks of every backward pass, runnable outside tests.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataio::BoundingBox;
use crate::error::{Error, Result};
use crate::net::fd::{
    max_relative_error, numeric_grad, numeric_grad_at, random_tensor, relative_error,
};
use crate::net::{
    batchnorm_backward, batchnorm_train, bce_with_logits, conv2d_backward, conv2d_forward,
    dense_dropout_backward, dense_dropout_forward, one_hot, relu_maxpool_backward,
    relu_maxpool_forward, temporal_head_backward, temporal_head_forward, BaseNet, BatchNormCache,
    BatchNormGrads, ConvGeometry, ConvGrads, DenseGrads, HeadCache, Mode, NetBatch, NetConfig,
    PoolCache, Tensor,
};
use crate::roialign::{roi_align_backward, roi_align_forward, RoiConfig};
use crate::util::rng;

pub const PER_OP_THRESHOLD: f64 = 1e-4;
pub const END_TO_END_THRESHOLD: f64 = 1e-3;

type T64 = Tensor<f64>;

/// Backward implementations under test; swap one out to inject a fault.
#[derive(Clone, Copy)]
pub struct Backwards {
    pub conv2d: fn(&T64, &T64, &T64, ConvGeometry, bool) -> Result<ConvGrads<f64>>,
    pub batchnorm2d: fn(&BatchNormCache<f64>, &T64, &T64) -> Result<BatchNormGrads<f64>>,
    pub relu_maxpool: fn(&PoolCache, &T64) -> Result<T64>,
    pub dense_dropout: fn(&T64, &T64, Option<&T64>, &T64) -> Result<DenseGrads<f64>>,
    pub temporal_head: fn(&HeadCache, &T64) -> T64,
    pub roi_align: fn(&T64, &[BoundingBox], &RoiConfig, &[usize]) -> Result<T64>,
}

impl Default for Backwards {
    fn default() -> Self {
        Self {
            conv2d: conv2d_backward,
            batchnorm2d: batchnorm_backward,
            relu_maxpool: relu_maxpool_backward,
            dense_dropout: dense_dropout_backward,
            temporal_head: temporal_head_backward,
            roi_align: roi_align_backward,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckEntry {
    pub op: &'static str,
    pub module: &'static str,
    pub max_relative_error: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradcheckReport {
    pub entries: Vec<GradcheckEntry>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.entries
            .iter()
            .filter(|e| !e.passed)
            .map(|e| e.op)
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let verdict = if e.passed { "ok" } else { "FAIL" };
            let _ = writeln!(
                s,
                "{:<16}{:.3e}\t< {:.0e}\t{verdict}",
                e.op, e.max_relative_error, e.threshold
            );
        }
        s
    }
}

pub const OPS: [(&str, &str); 8] = [
    ("conv2d", "net"),
    ("batchnorm2d", "net"),
    ("relu_maxpool", "net"),
    ("dense_dropout", "net"),
    ("temporal_head", "net"),
    ("bce_with_logits", "net"),
    ("roi_align", "roialign"),
    ("end_to_end", "net"),
];

/// `scope` is `all`, a module (`net`, `roialign`) or a single op name.
pub fn gradcheck(scope: &str) -> Result<GradcheckReport> {
    gradcheck_with(scope, &Backwards::default())
}

pub fn gradcheck_with(scope: &str, backwards: &Backwards) -> Result<GradcheckReport> {
    let selected: Vec<(&'static str, &'static str)> = OPS
        .iter()
        .copied()
        .filter(|&(op, module)| scope == "all" || scope == op || scope == module)
        .collect();
    if selected.is_empty() {
        let names: Vec<&str> = OPS.iter().map(|o| o.0).collect();
        return Err(Error::Config(format!(
            "unknown gradcheck scope {scope:?}; use all, net, roialign or one of {names:?}"
        )));
    }
    let mut report = GradcheckReport::default();
    for (op, module) in selected {
        let (err, threshold) = match op {
            "conv2d" => (check_conv(backwards)?, PER_OP_THRESHOLD),
            "batchnorm2d" => (check_batchnorm(backwards)?, PER_OP_THRESHOLD),
            "relu_maxpool" => (check_pool(backwards)?, PER_OP_THRESHOLD),
            "dense_dropout" => (check_dense(backwards)?, PER_OP_THRESHOLD),
            "temporal_head" => (check_head(backwards)?, PER_OP_THRESHOLD),
            "bce_with_logits" => (check_bce()?, PER_OP_THRESHOLD),
            "roi_align" => (check_roi(backwards)?, PER_OP_THRESHOLD),
            _ => (check_end_to_end()?, END_TO_END_THRESHOLD),
        };
        report.entries.push(GradcheckEntry {
            op,
            module,
            max_relative_error: err,
            threshold,
            passed: err < threshold,
        });
    }
    Ok(report)
}

/// Distinct values spaced far beyond the finite-difference step, none near
/// zero, in random order: no ties or kinks can be crossed.
fn spread_tensor(shape: &[usize], seed: u64) -> T64 {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n)
        .map(|i| 2.0 * (i as f64 + 0.5) / n as f64 - 1.0)
        .collect();
    values.shuffle(&mut rng(seed));
    Tensor::from_vec(shape, values)
}

fn worst(pairs: &[(&T64, &T64)]) -> f64 {
    pairs
        .iter()
        .map(|(a, n)| max_relative_error(a, n))
        .fold(0.0, f64::max)
}

fn check_conv(b: &Backwards) -> Result<f64> {
    let g = ConvGeometry::default();
    let x = random_tensor::<f64>(&[2, 3, 8, 8], 1);
    let k = random_tensor::<f64>(&[4, 3, 3, 3], 2);
    let bias = random_tensor::<f64>(&[4], 3);
    let probe = random_tensor::<f64>(&[2, 4, 8, 8], 4);
    let grads = (b.conv2d)(&x, &k, &probe, g, true)?;
    let f = |x: &T64, k: &T64, bias: &T64| {
        conv2d_forward(x, k, bias, g)
            .map(|y| y.dot(&probe))
            .unwrap_or(f64::NAN)
    };
    let nx = numeric_grad(&x, |x| f(x, &k, &bias));
    let nk = numeric_grad(&k, |k| f(&x, k, &bias));
    let nb = numeric_grad(&bias, |bias| f(&x, &k, bias));
    Ok(worst(&[
        (&grads.input, &nx),
        (&grads.kernel, &nk),
        (&grads.bias, &nb),
    ]))
}

fn check_batchnorm(b: &Backwards) -> Result<f64> {
    let x = random_tensor::<f64>(&[3, 4, 5, 5], 5);
    let gamma = random_tensor::<f64>(&[4], 6).map(|v| v + 1.5);
    let beta = random_tensor::<f64>(&[4], 7);
    let probe = random_tensor::<f64>(&[3, 4, 5, 5], 8);
    let eps = 1e-5;
    let (_, cache) = batchnorm_train(&x, &gamma, &beta, eps)?;
    let grads = (b.batchnorm2d)(&cache, &gamma, &probe)?;
    let f = |x: &T64, g: &T64, bt: &T64| {
        batchnorm_train(x, g, bt, eps)
            .map(|(y, _)| y.dot(&probe))
            .unwrap_or(f64::NAN)
    };
    let nx = numeric_grad(&x, |x| f(x, &gamma, &beta));
    let ng = numeric_grad(&gamma, |g| f(&x, g, &beta));
    let nb = numeric_grad(&beta, |bt| f(&x, &gamma, bt));
    Ok(worst(&[
        (&grads.input, &nx),
        (&grads.gamma, &ng),
        (&grads.beta, &nb),
    ]))
}

fn check_pool(b: &Backwards) -> Result<f64> {
    let x = spread_tensor(&[2, 3, 6, 6], 9);
    let probe = random_tensor::<f64>(&[2, 3, 3, 3], 10);
    let (_, cache) = relu_maxpool_forward(&x)?;
    let grad = (b.relu_maxpool)(&cache, &probe)?;
    let numeric = numeric_grad(&x, |x| {
        relu_maxpool_forward(x)
            .map(|(y, _)| y.dot(&probe))
            .unwrap_or(f64::NAN)
    });
    Ok(max_relative_error(&grad, &numeric))
}

fn check_dense(b: &Backwards) -> Result<f64> {
    let x = random_tensor::<f64>(&[4, 6], 11);
    let w = random_tensor::<f64>(&[5, 6], 12);
    let bias = random_tensor::<f64>(&[5], 13);
    let probe = random_tensor::<f64>(&[4, 5], 14);
    let (keep, seed) = (0.7, 15);
    let (_, mask) = dense_dropout_forward(&x, &w, &bias, keep, Mode::Train, seed)?;
    let grads = (b.dense_dropout)(&x, &w, mask.as_ref(), &probe)?;
    let f = |x: &T64, w: &T64, bias: &T64| {
        dense_dropout_forward(x, w, bias, keep, Mode::Train, seed)
            .map(|(y, _)| y.dot(&probe))
            .unwrap_or(f64::NAN)
    };
    let nx = numeric_grad(&x, |x| f(x, &w, &bias));
    let nw = numeric_grad(&w, |w| f(&x, w, &bias));
    let nb = numeric_grad(&bias, |bias| f(&x, &w, bias));
    Ok(worst(&[
        (&grads.input, &nx),
        (&grads.weight, &nw),
        (&grads.bias, &nb),
    ]))
}

fn check_head(b: &Backwards) -> Result<f64> {
    let logits = spread_tensor(&[5, 3, 4], 16);
    let probe = random_tensor::<f64>(&[3, 4], 17);
    let (_, cache) = temporal_head_forward(&logits)?;
    let grad = (b.temporal_head)(&cache, &probe);
    let numeric = numeric_grad(&logits, |x| {
        temporal_head_forward(x)
            .map(|(y, _)| y.dot(&probe))
            .unwrap_or(f64::NAN)
    });
    Ok(max_relative_error(&grad, &numeric))
}

fn check_bce() -> Result<f64> {
    let z = random_tensor::<f64>(&[4, 3], 18).map(|v| 3.0 * v);
    let y = one_hot::<f64>(&[0, 2, 1, 2], 3);
    let (_, grad) = bce_with_logits(&z, &y)?;
    let numeric = numeric_grad(&z, |z| {
        bce_with_logits(z, &y).map(|(l, _)| l).unwrap_or(f64::NAN)
    });
    Ok(max_relative_error(&grad, &numeric))
}

fn check_roi(b: &Backwards) -> Result<f64> {
    let map = random_tensor::<f64>(&[1, 6, 6], 19);
    let boxes = [bbox(0.15, 0.2, 0.8, 0.7, 0, 0)];
    let cfg = RoiConfig::default();
    let probe = random_tensor::<f64>(&[1, 1, 5, 5], 20);
    let grad = (b.roi_align)(&probe, &boxes, &cfg, map.shape())?;
    let numeric = numeric_grad(&map, |m| {
        roi_align_forward(m, &boxes, &cfg)
            .map(|y| y.dot(&probe))
            .unwrap_or(f64::NAN)
    });
    Ok(max_relative_error(&grad, &numeric))
}

fn bbox(x1: f64, y1: f64, x2: f64, y2: f64, track_id: u32, label: usize) -> BoundingBox {
    BoundingBox {
        x1,
        y1,
        x2,
        y2,
        track_id,
        label,
    }
}

/// Two 3-frame snippets on 16×16 input; one subject drops out of a frame.
fn toy_batch() -> NetBatch<f64> {
    let frames = 3;
    let boxes = vec![
        vec![
            vec![
                bbox(0.1, 0.1, 0.6, 0.5, 0, 1),
                bbox(0.5, 0.4, 0.9, 0.95, 4, 2),
            ],
            vec![bbox(0.15, 0.1, 0.65, 0.5, 0, 1)],
            vec![
                bbox(0.2, 0.1, 0.7, 0.5, 0, 1),
                bbox(0.45, 0.4, 0.85, 0.9, 4, 2),
            ],
        ],
        vec![vec![bbox(0.3, 0.2, 0.7, 0.8, 7, 3)]; 3],
    ];
    NetBatch {
        images: random_tensor(&[2 * frames, 3, 16, 16], 21),
        frames,
        boxes,
    }
}

/// Full forward/backward on 10 randomly chosen parameter entries.
fn check_end_to_end() -> Result<f64> {
    let config = NetConfig {
        conv_channels: vec![3, 4],
        fc_units: 6,
        ..NetConfig::default()
    };
    let net = BaseNet::<f64>::new(config, 22)?;
    let batch = toy_batch();
    let seed = 23;
    let loss_of = |net: &BaseNet<f64>| -> f64 {
        let Ok((out, _)) = net.forward_train_pure(&batch, seed) else {
            return f64::NAN;
        };
        let labels: Vec<usize> = out.subjects.iter().map(|s| s.label).collect();
        bce_with_logits(&out.logits, &one_hot(&labels, 4))
            .map(|(l, _)| l)
            .unwrap_or(f64::NAN)
    };
    let (out, cache) = net.forward_train_pure(&batch, seed)?;
    let labels: Vec<usize> = out.subjects.iter().map(|s| s.label).collect();
    let (_, grad) = bce_with_logits(&out.logits, &one_hot(&labels, 4))?;
    let grads = net.backward(&cache, &grad)?;
    let mut r = rng(24);
    let mut err: f64 = 0.0;
    for _ in 0..10 {
        let pi = r.random_range(0..grads.len());
        let ei = r.random_range(0..grads[pi].len());
        let start = net.params()[pi].1.clone();
        let numeric = numeric_grad_at(&start, &[ei], |t| {
            let mut probe = net.clone();
            *probe.params_mut()[pi] = t.clone();
            loss_of(&probe)
        })[0]
            .1;
        err = err.max(relative_error(grads[pi].data()[ei], numeric));
    }
    Ok(err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_build_passes_every_check() {
        let report = gradcheck("all").unwrap();
        assert_eq!(report.entries.len(), OPS.len());
        assert!(report.passed(), "{}", report.to_text());
    }

    #[test]
    fn corrupted_conv_backward_is_named() {
        fn off_by_one(
            x: &T64,
            k: &T64,
            g: &T64,
            geo: ConvGeometry,
            need: bool,
        ) -> Result<ConvGrads<f64>> {
            let mut grads = conv2d_backward(x, k, g, geo, need)?;
            let data = grads.kernel.data_mut();
            data.rotate_left(1);
            Ok(grads)
        }
        let broken = Backwards {
            conv2d: off_by_one,
            ..Backwards::default()
        };
        let report = gradcheck_with("net", &broken).unwrap();
        assert_eq!(report.failures(), vec!["conv2d"]);
    }

    #[test]
    fn scopes_select_entries() {
        assert_eq!(gradcheck("roialign").unwrap().entries.len(), 1);
        assert_eq!(
            gradcheck("bce_with_logits").unwrap().entries[0].op,
            "bce_with_logits"
        );
        assert!(gradcheck("optim").is_err());
    }
}
