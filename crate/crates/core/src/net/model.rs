use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::BoundingBox;
use crate::error::{Error, Result};
use crate::net::batchnorm::{batchnorm_backward, batchnorm_train, BatchNorm, BatchNormCache};
use crate::net::conv::{conv2d_backward, conv2d_forward, ConvGeometry};
use crate::net::dense::{
    dense_backward, dense_dropout_backward, dense_dropout_forward, dense_forward, Mode,
};
use crate::net::head::{temporal_head_backward, temporal_head_forward, HeadCache};
use crate::net::pool::{relu_maxpool_backward, relu_maxpool_forward, PoolCache};
use crate::net::tensor::{Scalar, Tensor};
use crate::roialign::{roi_align_batch_backward, roi_align_batch_forward, Roi, RoiConfig};
use crate::util::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Output channels of each 3×3 conv → 2×2 pool stage.
    pub conv_channels: Vec<usize>,
    /// Batch normalization between each conv and its pooling.
    pub conv_batchnorm: bool,
    pub fc_units: usize,
    pub keep_p: f64,
    pub num_classes: usize,
    pub in_channels: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub roi: RoiConfig,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            conv_channels: vec![8, 16, 32],
            conv_batchnorm: true,
            fc_units: 512,
            keep_p: 0.7,
            num_classes: 4,
            in_channels: 3,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            roi: RoiConfig::default(),
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return fail(format!(
                "conv stages must be non-empty with positive widths, got {:?}",
                self.conv_channels
            ));
        }
        if self.fc_units == 0 || self.num_classes == 0 || self.in_channels == 0 {
            return fail("fc_units, num_classes and in_channels must be positive".into());
        }
        if !(self.keep_p > 0.0 && self.keep_p <= 1.0) {
            return fail(format!("keep_p must lie in (0, 1], got {}", self.keep_p));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) || !(self.bn_eps > 0.0) {
            return fail("bn_momentum must lie in [0, 1] and bn_eps be positive".into());
        }
        self.roi.validate()
    }

    /// Feature-map extent after all stages for an `h × w` input.
    pub fn feature_size(&self, h: usize, w: usize) -> (usize, usize) {
        self.conv_channels
            .iter()
            .fold((h, w), |(h, w), _| (h.div_ceil(2), w.div_ceil(2)))
    }

    fn roi_features(&self) -> usize {
        self.conv_channels.last().copied().unwrap_or(0) * self.roi.crop_size * self.roi.crop_size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvStage<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub bn: Option<BatchNorm<T>>,
}

/// The classifier: conv stages, ROIAlign per subject box, FC → dropout →
/// batchnorm → FC, temporal max per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseNet<T> {
    config: NetConfig,
    pub stages: Vec<ConvStage<T>>,
    pub fc1_weight: Tensor<T>,
    pub fc1_bias: Tensor<T>,
    pub bn_fc: BatchNorm<T>,
    pub fc2_weight: Tensor<T>,
    pub fc2_bias: Tensor<T>,
}

/// `B` snippets of `T` frames stacked snippet-major as `(B·T, C, H, W)`, with
/// the boxes visible in each frame.
#[derive(Debug, Clone)]
pub struct NetBatch<T> {
    pub images: Tensor<T>,
    pub frames: usize,
    pub boxes: Vec<Vec<Vec<BoundingBox>>>,
}

/// One tracked individual of one snippet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subject {
    pub snippet: usize,
    pub track_id: u32,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct NetOutput<T> {
    /// `(subjects, classes)`, ordered by snippet then track id.
    pub logits: Tensor<T>,
    pub subjects: Vec<Subject>,
}

struct StageCache<T> {
    input: Tensor<T>,
    bn: Option<BatchNormCache<T>>,
    pool: PoolCache,
}

pub struct ForwardCache<T> {
    stages: Vec<StageCache<T>>,
    feature_shape: Vec<usize>,
    rois: Vec<Roi>,
    /// `(snippet, frame, subject within snippet)` of each ROI row.
    slots: Vec<(usize, usize, usize)>,
    roi_flat: Tensor<T>,
    mask: Option<Tensor<T>>,
    bn_fc: Option<BatchNormCache<T>>,
    h2: Tensor<T>,
    heads: Vec<HeadCache>,
    subjects_per_snippet: Vec<usize>,
}

/// Layout of ROI rows for a batch: rows are ordered by (snippet, frame,
/// track id).
struct RowPlan {
    rois: Vec<Roi>,
    slots: Vec<(usize, usize, usize)>,
    subjects: Vec<Subject>,
    per_snippet: Vec<usize>,
}

fn plan_rows<T: Scalar>(batch: &NetBatch<T>) -> Result<RowPlan> {
    let mut plan = RowPlan {
        rois: Vec::new(),
        slots: Vec::new(),
        subjects: Vec::new(),
        per_snippet: Vec::new(),
    };
    for (s, frames) in batch.boxes.iter().enumerate() {
        if frames.len() != batch.frames {
            return Err(Error::Shape(format!(
                "snippet {s} has boxes for {} frames, expected {}",
                frames.len(),
                batch.frames
            )));
        }
        let mut tracks: BTreeMap<u32, usize> = BTreeMap::new();
        for b in frames.iter().flatten() {
            tracks.entry(b.track_id).or_insert(b.label);
        }
        if tracks.is_empty() {
            return Err(Error::Shape(format!("snippet {s} has no subject boxes")));
        }
        let index: BTreeMap<u32, usize> =
            tracks.keys().enumerate().map(|(i, &id)| (id, i)).collect();
        for (&track_id, &label) in &tracks {
            plan.subjects.push(Subject {
                snippet: s,
                track_id,
                label,
            });
        }
        plan.per_snippet.push(tracks.len());
        for (t, boxes) in frames.iter().enumerate() {
            let mut sorted: Vec<&BoundingBox> = boxes.iter().collect();
            sorted.sort_by_key(|b| b.track_id);
            for b in sorted {
                plan.rois.push(Roi {
                    image: s * batch.frames + t,
                    bbox: *b,
                });
                plan.slots.push((s, t, index[&b.track_id]));
            }
        }
    }
    Ok(plan)
}

fn uniform<T: Scalar>(shape: &[usize], bound: f64, r: &mut impl Rng) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n)
            .map(|_| T::of(r.random_range(-bound..bound)))
            .collect(),
    )
}

impl<T: Scalar> BaseNet<T> {
    /// He-normal conv kernels, uniform `±1/√fan_in` FC weights, zero conv
    /// biases; all drawn from `seed`.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut stages = Vec::new();
        let mut c_in = config.in_channels;
        for (i, &c_out) in config.conv_channels.iter().enumerate() {
            let fan_in = (c_in * 9) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            let mut r = rng(derive_seed(seed, &[1, i as u64]));
            let weight = Tensor::from_vec(
                &[c_out, c_in, 3, 3],
                (0..c_out * c_in * 9)
                    .map(|_| T::of(normal.sample(&mut r)))
                    .collect(),
            );
            stages.push(ConvStage {
                weight,
                bias: Tensor::zeros(&[c_out]),
                bn: config
                    .conv_batchnorm
                    .then(|| BatchNorm::new(c_out, config.bn_momentum, config.bn_eps)),
            });
            c_in = c_out;
        }
        let f = config.roi_features();
        let m = config.fc_units;
        let k = config.num_classes;
        let mut r = rng(derive_seed(seed, &[2]));
        let b1 = 1.0 / (f as f64).sqrt();
        let fc1_weight = uniform(&[m, f], b1, &mut r);
        let fc1_bias = uniform(&[m], b1, &mut r);
        let b2 = 1.0 / (m as f64).sqrt();
        let fc2_weight = uniform(&[k, m], b2, &mut r);
        let fc2_bias = uniform(&[k], b2, &mut r);
        Ok(Self {
            bn_fc: BatchNorm::new(m, config.bn_momentum, config.bn_eps),
            config,
            stages,
            fc1_weight,
            fc1_bias,
            fc2_weight,
            fc2_bias,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    /// Trainable tensors in a fixed order shared by [`Self::params_mut`] and
    /// the gradients returned from [`Self::backward`].
    pub fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, st) in self.stages.iter().enumerate() {
            out.push((format!("stage{i}.conv.weight"), &st.weight));
            out.push((format!("stage{i}.conv.bias"), &st.bias));
            if let Some(bn) = &st.bn {
                out.push((format!("stage{i}.bn.gamma"), &bn.gamma));
                out.push((format!("stage{i}.bn.beta"), &bn.beta));
            }
        }
        out.push(("fc1.weight".into(), &self.fc1_weight));
        out.push(("fc1.bias".into(), &self.fc1_bias));
        out.push(("bn_fc.gamma".into(), &self.bn_fc.gamma));
        out.push(("bn_fc.beta".into(), &self.bn_fc.beta));
        out.push(("fc2.weight".into(), &self.fc2_weight));
        out.push(("fc2.bias".into(), &self.fc2_bias));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for st in &mut self.stages {
            out.push(&mut st.weight);
            out.push(&mut st.bias);
            if let Some(bn) = &mut st.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out.push(&mut self.fc1_weight);
        out.push(&mut self.fc1_bias);
        out.push(&mut self.bn_fc.gamma);
        out.push(&mut self.bn_fc.beta);
        out.push(&mut self.fc2_weight);
        out.push(&mut self.fc2_bias);
        out
    }

    /// Trainable tensors followed by the batchnorm running statistics.
    pub fn state(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = self.params();
        for (i, st) in self.stages.iter().enumerate() {
            if let Some(bn) = &st.bn {
                out.push((format!("stage{i}.bn.running_mean"), &bn.running_mean));
                out.push((format!("stage{i}.bn.running_var"), &bn.running_var));
            }
        }
        out.push(("bn_fc.running_mean".into(), &self.bn_fc.running_mean));
        out.push(("bn_fc.running_var".into(), &self.bn_fc.running_var));
        out
    }

    fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut running = Vec::new();
        for st in &mut self.stages {
            if let Some(bn) = &mut st.bn {
                running.push(&mut bn.running_mean as *mut Tensor<T>);
                running.push(&mut bn.running_var as *mut Tensor<T>);
            }
        }
        running.push(&mut self.bn_fc.running_mean as *mut Tensor<T>);
        running.push(&mut self.bn_fc.running_var as *mut Tensor<T>);
        let mut out = self.params_mut();
        // SAFETY: running statistics and trainable tensors are disjoint fields.
        out.extend(running.into_iter().map(|p| unsafe { &mut *p }));
        out
    }

    /// Overwrites every state tensor from `arrays`, which must name exactly
    /// the tensors of [`Self::state`] with matching shapes.
    pub fn load_state(&mut self, arrays: &BTreeMap<String, Tensor<T>>) -> Result<()> {
        let names: Vec<(String, Vec<usize>)> = self
            .state()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        for (name, shape) in &names {
            match arrays.get(name) {
                None => return Err(Error::Checkpoint(format!("missing model array {name}"))),
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(Error::Checkpoint(format!(
                        "model array {name} has shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                Some(_) => {}
            }
        }
        for ((name, _), dst) in names.iter().zip(self.state_mut()) {
            *dst = arrays[name].clone();
        }
        Ok(())
    }

    fn check_input(&self, batch: &NetBatch<T>) -> Result<()> {
        let &[n, c, h, w] = batch.images.shape() else {
            return Err(Error::Shape(format!(
                "images must be (N, C, H, W), got {:?}",
                batch.images.shape()
            )));
        };
        if c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "model expects {} channels, got {c}",
                self.config.in_channels
            )));
        }
        if n != batch.boxes.len() * batch.frames {
            return Err(Error::Shape(format!(
                "{n} images for {} snippets of {} frames",
                batch.boxes.len(),
                batch.frames
            )));
        }
        if h == 0 || w == 0 {
            return Err(Error::Shape("empty images".into()));
        }
        Ok(())
    }

    fn run(
        &self,
        batch: &NetBatch<T>,
        mode: Mode,
        seed: u64,
    ) -> Result<(NetOutput<T>, ForwardCache<T>)> {
        self.check_input(batch)?;
        let plan = plan_rows(batch)?;
        let geometry = ConvGeometry::default();
        let mut x = batch.images.clone();
        let mut stage_caches = Vec::with_capacity(self.stages.len());
        for st in &self.stages {
            let conv = conv2d_forward(&x, &st.weight, &st.bias, geometry)?;
            let (normed, bn_cache) = match (&st.bn, mode) {
                (Some(bn), Mode::Train) => {
                    let (y, c) = batchnorm_train(&conv, &bn.gamma, &bn.beta, bn.eps)?;
                    (y, Some(c))
                }
                (Some(bn), Mode::Eval) => (bn.forward_eval(&conv)?, None),
                (None, _) => (conv, None),
            };
            let (pooled, pool) = relu_maxpool_forward(&normed)?;
            stage_caches.push(StageCache {
                input: std::mem::replace(&mut x, pooled),
                bn: bn_cache,
                pool,
            });
        }
        let feature_shape = x.shape().to_vec();
        let rows = plan.rois.len();
        let roi = roi_align_batch_forward(&x, &plan.rois, &self.config.roi)?;
        let roi_flat = roi.reshape(&[rows, self.config.roi_features()]);
        let (h1, mask) = dense_dropout_forward(
            &roi_flat,
            &self.fc1_weight,
            &self.fc1_bias,
            self.config.keep_p,
            mode,
            derive_seed(seed, &[3]),
        )?;
        let (h2, bn_fc) = match mode {
            Mode::Train => {
                let (y, c) =
                    batchnorm_train(&h1, &self.bn_fc.gamma, &self.bn_fc.beta, self.bn_fc.eps)?;
                (y, Some(c))
            }
            Mode::Eval => (self.bn_fc.forward_eval(&h1)?, None),
        };
        let z = dense_forward(&h2, &self.fc2_weight, &self.fc2_bias)?;
        let k = self.config.num_classes;
        let mut tables: Vec<Tensor<T>> = plan
            .per_snippet
            .iter()
            .map(|&s| Tensor::filled(&[batch.frames, s, k], T::neg_infinity()))
            .collect();
        for (row, &(s, t, j)) in plan.slots.iter().enumerate() {
            let subjects = plan.per_snippet[s];
            tables[s].data_mut()[(t * subjects + j) * k..][..k]
                .copy_from_slice(&z.data()[row * k..][..k]);
        }
        let mut logits = Vec::with_capacity(plan.subjects.len() * k);
        let mut heads = Vec::with_capacity(tables.len());
        for table in &tables {
            let (out, cache) = temporal_head_forward(table)?;
            logits.extend_from_slice(out.data());
            heads.push(cache);
        }
        let output = NetOutput {
            logits: Tensor::from_vec(&[plan.subjects.len(), k], logits),
            subjects: plan.subjects,
        };
        let cache = ForwardCache {
            stages: stage_caches,
            feature_shape,
            rois: plan.rois,
            slots: plan.slots,
            roi_flat,
            mask,

            bn_fc,
            h2,
            heads,
            subjects_per_snippet: plan.per_snippet,
        };
        Ok((output, cache))
    }

    /// Training-mode forward: batch statistics, seeded dropout, and running
    /// statistics updated in place.
    pub fn forward_train(
        &mut self,
        batch: &NetBatch<T>,
        seed: u64,
    ) -> Result<(NetOutput<T>, ForwardCache<T>)> {
        let (out, cache) = self.run(batch, Mode::Train, seed)?;
        for (st, sc) in self.stages.iter_mut().zip(&cache.stages) {
            if let (Some(bn), Some(c)) = (&mut st.bn, &sc.bn) {
                bn.update_running(c);
            }
        }
        if let Some(c) = &cache.bn_fc {
            self.bn_fc.update_running(c);
        }
        Ok((out, cache))
    }

    /// Training-mode forward that leaves the running statistics untouched.
    pub fn forward_train_pure(
        &self,
        batch: &NetBatch<T>,
        seed: u64,
    ) -> Result<(NetOutput<T>, ForwardCache<T>)> {
        self.run(batch, Mode::Train, seed)
    }

    /// Inference: running statistics, no dropout.
    pub fn predict(&self, batch: &NetBatch<T>) -> Result<NetOutput<T>> {
        Ok(self.run(batch, Mode::Eval, 0)?.0)
    }

    /// Gradients of every trainable tensor, in [`Self::params`] order.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_logits: &Tensor<T>,
    ) -> Result<Vec<Tensor<T>>> {
        let k = self.config.num_classes;
        let total: usize = cache.subjects_per_snippet.iter().sum();
        if grad_logits.shape() != [total, k] {
            return Err(Error::Shape(format!(
                "logit grad {:?}, expected [{total}, {k}]",
                grad_logits.shape()
            )));
        }
        let rows = cache.slots.len();
        let mut grad_z = Tensor::zeros(&[rows, k]);
        let mut tables = Vec::with_capacity(cache.heads.len());
        let mut offset = 0;
        for (head, &s) in cache.heads.iter().zip(&cache.subjects_per_snippet) {
            let g = Tensor::from_vec(
                &[s, k],
                grad_logits.data()[offset * k..(offset + s) * k].to_vec(),
            );
            tables.push(temporal_head_backward(head, &g));
            offset += s;
        }
        for (row, &(s, t, j)) in cache.slots.iter().enumerate() {
            let subjects = cache.subjects_per_snippet[s];
            grad_z.data_mut()[row * k..][..k]
                .copy_from_slice(&tables[s].data()[(t * subjects + j) * k..][..k]);
        }
        let fc2 = dense_backward(&cache.h2, &self.fc2_weight, &grad_z)?;
        let bn = batchnorm_backward(
            cache
                .bn_fc
                .as_ref()
                .ok_or_else(|| Error::Shape("backward needs a training-mode forward".into()))?,
            &self.bn_fc.gamma,
            &fc2.input,
        )?;
        let fc1 = dense_dropout_backward(
            &cache.roi_flat,
            &self.fc1_weight,
            cache.mask.as_ref(),
            &bn.input,
        )?;
        let p = self.config.roi.crop_size;
        let roi_grad = fc1.input.reshape(&[rows, cache.feature_shape[1], p, p]);
        let mut g = roi_align_batch_backward(
            &roi_grad,
            &cache.rois,
            &self.config.roi,
            &cache.feature_shape,
        )?;
        let mut stage_grads = Vec::with_capacity(self.stages.len());
        let geometry = ConvGeometry::default();
        for (i, (st, sc)) in self.stages.iter().zip(&cache.stages).enumerate().rev() {
            let g_norm = relu_maxpool_backward(&sc.pool, &g)?;
            let (g_conv, bn_grads) = match (&st.bn, &sc.bn) {
                (Some(bn), Some(c)) => {
                    let gr = batchnorm_backward(c, &bn.gamma, &g_norm)?;
                    (gr.input, Some((gr.gamma, gr.beta)))
                }
                _ => (g_norm, None),
            };
            let conv = conv2d_backward(&sc.input, &st.weight, &g_conv, geometry, i > 0)?;
            g = conv.input;
            stage_grads.push((conv.kernel, conv.bias, bn_grads));
        }
        let mut grads = Vec::new();
        for (kernel, bias, bn) in stage_grads.into_iter().rev() {
            grads.push(kernel);
            grads.push(bias);
            if let Some((gamma, beta)) = bn {
                grads.push(gamma);
                grads.push(beta);
            }
        }
        grads.extend([
            fc1.weight, fc1.bias, bn.gamma, bn.beta, fc2.weight, fc2.bias,
        ]);
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::fd::{numeric_grad_at, random_tensor, relative_error};
    use crate::net::loss::{bce_with_logits, one_hot};

    fn toy_config() -> NetConfig {
        NetConfig {
            conv_channels: vec![3, 4],
            fc_units: 6,
            num_classes: 4,
            ..NetConfig::default()
        }
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

    fn toy_batch(seed: u64) -> NetBatch<f64> {
        let frames = 3;
        let images = random_tensor(&[2 * frames, 3, 16, 16], seed);
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
            vec![
                vec![bbox(0.3, 0.2, 0.7, 0.8, 7, 3)],
                vec![bbox(0.3, 0.25, 0.7, 0.85, 7, 3)],
                vec![bbox(0.3, 0.3, 0.7, 0.9, 7, 3)],
            ],
        ];
        NetBatch {
            images,
            frames,
            boxes,
        }
    }

    #[test]
    fn output_shape_for_two_single_subject_snippets() {
        let net = BaseNet::<f64>::new(NetConfig::default(), 0).unwrap();
        let images = random_tensor(&[2 * 15, 3, 32, 32], 1);
        let b = bbox(0.2, 0.2, 0.6, 0.6, 0, 0);
        let boxes = vec![vec![vec![b]; 15]; 2];
        let out = net
            .predict(&NetBatch {
                images,
                frames: 15,
                boxes,
            })
            .unwrap();
        assert_eq!(out.logits.shape(), &[2, 4]);
        assert_eq!(out.subjects.len(), 2);
    }

    #[test]
    fn duplicated_snippet_gives_identical_logits_at_inference() {
        let net = BaseNet::<f64>::new(toy_config(), 3).unwrap();
        let one = toy_batch(5);
        let n = one.frames * 3 * 16 * 16;
        let mut data = one.images.data()[..n].to_vec();
        data.extend_from_slice(&one.images.data()[..n]);
        let dup = NetBatch {
            images: Tensor::from_vec(&[2 * one.frames, 3, 16, 16], data),
            frames: one.frames,
            boxes: vec![one.boxes[0].clone(), one.boxes[0].clone()],
        };
        let out = net.predict(&dup).unwrap();
        assert_eq!(out.subjects.len(), 4);
        assert_eq!(out.logits.data()[..8], out.logits.data()[8..]);
    }

    #[test]
    fn subjects_are_ordered_by_snippet_then_track() {
        let net = BaseNet::<f64>::new(toy_config(), 3).unwrap();
        let out = net.predict(&toy_batch(5)).unwrap();
        let ids: Vec<_> = out
            .subjects
            .iter()
            .map(|s| (s.snippet, s.track_id, s.label))
            .collect();
        assert_eq!(ids, vec![(0, 0, 1), (0, 4, 2), (1, 7, 3)]);
    }

    #[test]
    fn inference_is_pure_and_training_updates_running_stats() {
        let mut net = BaseNet::<f64>::new(toy_config(), 3).unwrap();
        let batch = toy_batch(6);
        let before = net.clone();
        let a = net.predict(&batch).unwrap().logits;
        assert_eq!(net, before);
        assert_eq!(a, net.predict(&batch).unwrap().logits);
        net.forward_train(&batch, 1).unwrap();
        assert_ne!(net.bn_fc.running_mean, before.bn_fc.running_mean);
        assert_eq!(net.params().len(), before.params().len());
    }

    #[test]
    fn end_to_end_gradient_matches_central_differences() {
        let net = BaseNet::<f64>::new(toy_config(), 11).unwrap();
        let batch = toy_batch(12);
        let seed = 99;
        let loss_of = |net: &BaseNet<f64>| {
            let (out, _) = net.forward_train_pure(&batch, seed).unwrap();
            let labels: Vec<usize> = out.subjects.iter().map(|s| s.label).collect();
            bce_with_logits(&out.logits, &one_hot(&labels, 4))
                .unwrap()
                .0
        };
        let (out, cache) = net.forward_train_pure(&batch, seed).unwrap();
        let labels: Vec<usize> = out.subjects.iter().map(|s| s.label).collect();
        let (_, grad) = bce_with_logits(&out.logits, &one_hot(&labels, 4)).unwrap();
        let grads = net.backward(&cache, &grad).unwrap();
        let mut r = rng(13);
        let n_params = net.params().len();
        for _ in 0..10 {
            let pi = r.random_range(0..n_params);
            let ei = r.random_range(0..grads[pi].len());
            let base = net.clone();
            let numeric = numeric_grad_at(&net.params()[pi].1.clone(), &[ei], |t| {
                let mut probe = base.clone();
                *probe.params_mut()[pi] = t.clone();
                loss_of(&probe)
            })[0]
                .1;
            let err = relative_error(grads[pi].data()[ei], numeric);
            assert!(
                err < 1e-3,
                "{}[{ei}]: {} vs {numeric} ({err:e})",
                net.params()[pi].0,
                grads[pi].data()[ei]
            );
        }
    }

    #[test]
    fn state_round_trips_through_load() {
        let a = BaseNet::<f32>::new(toy_config(), 1).unwrap();
        let mut b = BaseNet::<f32>::new(toy_config(), 2).unwrap();
        let arrays: BTreeMap<String, Tensor<f32>> =
            a.state().into_iter().map(|(n, t)| (n, t.clone())).collect();
        b.load_state(&arrays).unwrap();
        assert_eq!(a, b);
        let mut missing = arrays.clone();
        missing.remove("fc1.bias");
        assert!(b.load_state(&missing).is_err());
    }

    #[test]
    fn parameter_names_are_unique() {
        let net = BaseNet::<f32>::new(NetConfig::default(), 0).unwrap();
        let names: std::collections::BTreeSet<_> =
            net.state().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), net.state().len());
    }
}
