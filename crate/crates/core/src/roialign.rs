//! Differentiable ROIAlign: crops each box of a feature map onto a fixed
//! `P × P` grid by bilinear sampling.
//!
//! Boxes are normalized to `[0, 1]` of the original image and scaled by the
//! feature-map extent. Samples use half-pixel centers with edge clamping, the
//! same convention as [`crate::dataio::resize_bilinear`].

use serde::{Deserialize, Serialize};

use crate::dataio::BoundingBox;
use crate::error::{Error, Result};
use crate::net::{Scalar, Tensor};

/// Boxes whose mapped extent falls below this are widened to it.
pub const MIN_EXTENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiConfig {
    pub crop_size: usize,
    pub sampling_points: usize,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            crop_size: 5,
            sampling_points: 2,
        }
    }
}

impl RoiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.crop_size == 0 || self.sampling_points == 0 {
            return Err(Error::Config(format!(
                "ROI crop size and sampling points must be >= 1, got {} and {}",
                self.crop_size, self.sampling_points
            )));
        }
        Ok(())
    }
}

/// One box to crop from image `image` of a batched feature map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roi {
    pub image: usize,
    pub bbox: BoundingBox,
}

/// Bilinear taps of one sample point: `(flat spatial index, weight)`.
type Taps = [(usize, f64); 4];

fn axis_taps(q: f64, len: usize) -> [(usize, f64); 2] {
    let c = (q - 0.5).clamp(0.0, (len - 1) as f64);
    let i0 = c.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    let t = c - i0 as f64;
    [(i0, 1.0 - t), (i1, t)]
}

fn widen(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo >= MIN_EXTENT {
        (lo, hi)
    } else {
        let mid = 0.5 * (lo + hi);
        (mid - 0.5 * MIN_EXTENT, mid + 0.5 * MIN_EXTENT)
    }
}

/// Taps for every sample of every bin, bin-major in row-major bin order.
fn box_taps(bbox: &BoundingBox, h: usize, w: usize, config: &RoiConfig) -> Vec<Taps> {
    let p = config.crop_size;
    let n = config.sampling_points;
    let (x1, x2) = widen(bbox.x1 * w as f64, bbox.x2 * w as f64);
    let (y1, y2) = widen(bbox.y1 * h as f64, bbox.y2 * h as f64);
    let (bw, bh) = ((x2 - x1) / p as f64, (y2 - y1) / p as f64);
    let mut taps = Vec::with_capacity(p * p * n * n);
    for py in 0..p {
        for px in 0..p {
            for sy in 0..n {
                let ty = axis_taps(y1 + (py as f64 + (sy as f64 + 0.5) / n as f64) * bh, h);
                for sx in 0..n {
                    let tx = axis_taps(x1 + (px as f64 + (sx as f64 + 0.5) / n as f64) * bw, w);
                    taps.push([
                        (ty[0].0 * w + tx[0].0, ty[0].1 * tx[0].1),
                        (ty[0].0 * w + tx[1].0, ty[0].1 * tx[1].1),
                        (ty[1].0 * w + tx[0].0, ty[1].1 * tx[0].1),
                        (ty[1].0 * w + tx[1].0, ty[1].1 * tx[1].1),
                    ]);
                }
            }
        }
    }
    taps
}

fn batch_dims<T: Scalar>(featmaps: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    match *featmaps.shape() {
        [n, c, h, w] if h > 0 && w > 0 => Ok((n, c, h, w)),
        _ => Err(Error::Shape(format!(
            "ROIAlign expects (N, C, H, W) maps, got {:?}",
            featmaps.shape()
        ))),
    }
}

fn check_rois(rois: &[Roi], images: usize) -> Result<()> {
    for roi in rois {
        if roi.image >= images {
            return Err(Error::Shape(format!(
                "ROI refers to image {} of {images}",
                roi.image
            )));
        }
        if !roi.bbox.is_valid() {
            return Err(Error::Shape(format!("invalid ROI box {:?}", roi.bbox)));
        }
    }
    Ok(())
}

/// Crops from `(N, C, H, W)` maps into `(R, C, P, P)`.
pub fn roi_align_batch_forward<T: Scalar>(
    featmaps: &Tensor<T>,
    rois: &[Roi],
    config: &RoiConfig,
) -> Result<Tensor<T>> {
    config.validate()?;
    let (n, c, h, w) = batch_dims(featmaps)?;
    check_rois(rois, n)?;
    let p2 = config.crop_size * config.crop_size;
    let per_bin = config.sampling_points * config.sampling_points;
    let scale = 1.0 / per_bin as f64;
    let mut out = Tensor::zeros(&[rois.len(), c, config.crop_size, config.crop_size]);
    for (r, roi) in rois.iter().enumerate() {
        let taps = box_taps(&roi.bbox, h, w, config);
        for ch in 0..c {
            let plane = &featmaps.data()[(roi.image * c + ch) * h * w..][..h * w];
            let dst = &mut out.data_mut()[(r * c + ch) * p2..][..p2];
            for (bin, samples) in dst.iter_mut().zip(taps.chunks(per_bin)) {
                let sum: f64 = samples
                    .iter()
                    .flat_map(|t| t.iter())
                    .map(|&(i, wt)| wt * plane[i].as_f64())
                    .sum();
                *bin = T::of(sum * scale);
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`roi_align_batch_forward`]; boxes receive no gradient.
pub fn roi_align_batch_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    rois: &[Roi],
    config: &RoiConfig,
    featmap_shape: &[usize],
) -> Result<Tensor<T>> {
    config.validate()?;
    let &[n, c, h, w] = featmap_shape else {
        return Err(Error::Shape(format!(
            "ROIAlign expects (N, C, H, W) maps, got {featmap_shape:?}"
        )));
    };
    check_rois(rois, n)?;
    let p = config.crop_size;
    if grad_out.shape() != [rois.len(), c, p, p] {
        return Err(Error::Shape(format!(
            "ROIAlign grad {:?}, expected {:?}",
            grad_out.shape(),
            [rois.len(), c, p, p]
        )));
    }
    let per_bin = config.sampling_points * config.sampling_points;
    let scale = 1.0 / per_bin as f64;
    let mut grad = vec![0.0f64; n * c * h * w];
    for (r, roi) in rois.iter().enumerate() {
        let taps = box_taps(&roi.bbox, h, w, config);
        for ch in 0..c {
            let plane = &mut grad[(roi.image * c + ch) * h * w..][..h * w];
            let src = &grad_out.data()[(r * c + ch) * p * p..][..p * p];
            for (&g, samples) in src.iter().zip(taps.chunks(per_bin)) {
                let share = g.as_f64() * scale;
                for &(i, wt) in samples.iter().flat_map(|t| t.iter()) {
                    plane[i] += wt * share;
                }
            }
        }
    }
    Ok(Tensor::from_vec(
        featmap_shape,
        grad.into_iter().map(T::of).collect(),
    ))
}

fn single(featmap_shape: &[usize]) -> Result<Vec<usize>> {
    match *featmap_shape {
        [c, h, w] => Ok(vec![1, c, h, w]),
        _ => Err(Error::Shape(format!(
            "ROIAlign expects a (C, H, W) map, got {featmap_shape:?}"
        ))),
    }
}

fn image_rois(boxes: &[BoundingBox]) -> Vec<Roi> {
    boxes.iter().map(|&bbox| Roi { image: 0, bbox }).collect()
}

/// Crops every box of one `(C, H, W)` map; output is `(boxes, C, P, P)`.
pub fn roi_align_forward<T: Scalar>(
    featmap: &Tensor<T>,
    boxes: &[BoundingBox],
    config: &RoiConfig,
) -> Result<Tensor<T>> {
    let shape = single(featmap.shape())?;
    roi_align_batch_forward(&featmap.clone().reshape(&shape), &image_rois(boxes), config)
}

pub fn roi_align_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    boxes: &[BoundingBox],
    config: &RoiConfig,
    featmap_shape: &[usize],
) -> Result<Tensor<T>> {
    let shape = single(featmap_shape)?;
    Ok(
        roi_align_batch_backward(grad_out, &image_rois(boxes), config, &shape)?
            .reshape(featmap_shape),
    )
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::net::fd::{max_relative_error, numeric_grad, random_tensor};
    use crate::util::rng;

    fn bbox(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox {
            x1,
            y1,
            x2,
            y2,
            track_id: 0,
            label: 0,
        }
    }

    fn random_box(r: &mut impl Rng) -> BoundingBox {
        let (a, b) = (r.random::<f64>(), r.random::<f64>());
        let (c, d) = (r.random::<f64>(), r.random::<f64>());
        bbox(a.min(b), c.min(d), a.max(b), c.max(d))
    }

    /// Brute force: tent-weighted sum over every map pixel at each sample.
    fn oracle(map: &Tensor<f64>, b: &BoundingBox, p: usize, n: usize) -> Vec<f64> {
        let (c, h, w) = (map.dim(0), map.dim(1), map.dim(2));
        let mut x1 = b.x1 * w as f64;
        let mut x2 = b.x2 * w as f64;
        let mut y1 = b.y1 * h as f64;
        let mut y2 = b.y2 * h as f64;
        if x2 - x1 < MIN_EXTENT {
            let m = (x1 + x2) / 2.0;
            (x1, x2) = (m - MIN_EXTENT / 2.0, m + MIN_EXTENT / 2.0);
        }
        if y2 - y1 < MIN_EXTENT {
            let m = (y1 + y2) / 2.0;
            (y1, y2) = (m - MIN_EXTENT / 2.0, m + MIN_EXTENT / 2.0);
        }
        let tent = |i: usize, q: f64, len: usize| {
            let qc = (q - 0.5).max(0.0).min(len as f64 - 1.0);
            (1.0 - (i as f64 - qc).abs()).max(0.0)
        };
        let mut out = Vec::new();
        for ch in 0..c {
            for by in 0..p {
                for bx in 0..p {
                    let mut acc = 0.0;
                    for sy in 0..n {
                        for sx in 0..n {
                            let qy = y1
                                + (y2 - y1) * (by as f64 + (sy as f64 + 0.5) / n as f64) / p as f64;
                            let qx = x1
                                + (x2 - x1) * (bx as f64 + (sx as f64 + 0.5) / n as f64) / p as f64;
                            for y in 0..h {
                                for x in 0..w {
                                    acc += tent(y, qy, h)
                                        * tent(x, qx, w)
                                        * map.data()[(ch * h + y) * w + x];
                                }
                            }
                        }
                    }
                    out.push(acc / (n * n) as f64);
                }
            }
        }
        out
    }

    #[test]
    fn constant_map_gives_constant_crop() {
        let map = Tensor::filled(&[2, 7, 9], 3.25f64);
        let out =
            roi_align_forward(&map, &[bbox(0.1, 0.2, 0.7, 0.9)], &RoiConfig::default()).unwrap();
        assert!(out.data().iter().all(|&v| (v - 3.25).abs() < 1e-12));
        assert_eq!(out.shape(), &[1, 2, 5, 5]);
    }

    #[test]
    fn hand_bilinear_center() {
        let map = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let cfg = RoiConfig {
            crop_size: 1,
            sampling_points: 1,
        };
        let out = roi_align_forward(&map, &[bbox(0.0, 0.0, 1.0, 1.0)], &cfg).unwrap();
        assert_eq!(out.data(), &[2.5]);
    }

    #[test]
    fn identical_boxes_identical_features() {
        let map = random_tensor::<f64>(&[3, 8, 8], 1);
        let b = bbox(0.2, 0.3, 0.6, 0.8);
        let out = roi_align_forward(&map, &[b, b], &RoiConfig::default()).unwrap();
        let half = out.len() / 2;
        assert_eq!(out.data()[..half], out.data()[half..]);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut r = rng(77);
        for trial in 0..200 {
            let (h, w) = (r.random_range(1..10), r.random_range(1..10));
            let c = r.random_range(1..3);
            let cfg = RoiConfig {
                crop_size: r.random_range(1..6),
                sampling_points: r.random_range(1..4),
            };
            let map = random_tensor::<f64>(&[c, h, w], 1000 + trial);
            let b = random_box(&mut r);
            let got = roi_align_forward(&map, &[b], &cfg).unwrap();
            let want = oracle(&map, &b, cfg.crop_size, cfg.sampling_points);
            for (g, o) in got.data().iter().zip(&want) {
                assert!((g - o).abs() < 1e-10, "trial {trial}: {g} vs {o}");
            }
        }
    }

    #[test]
    fn degenerate_box_is_widened() {
        let map = random_tensor::<f64>(&[1, 6, 6], 2);
        let point = bbox(0.5, 0.5, 0.5 + 1e-12, 0.5 + 1e-12);
        let out = roi_align_forward(&map, &[point], &RoiConfig::default()).unwrap();
        assert!(out.is_finite());
        let want = oracle(&map, &point, 5, 2);
        for (g, o) in out.data().iter().zip(&want) {
            assert!((g - o).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_gradient_and_mass_conservation() {
        let boxes = [bbox(0.0, 0.1, 0.9, 1.0), bbox(0.3, 0.3, 0.4, 0.5)];
        let cfg = RoiConfig::default();
        let zero = roi_align_backward(
            &Tensor::<f64>::zeros(&[2, 2, 5, 5]),
            &boxes,
            &cfg,
            &[2, 6, 6],
        )
        .unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
        let g = random_tensor::<f64>(&[2, 2, 5, 5], 3);
        let back = roi_align_backward(&g, &boxes, &cfg, &[2, 6, 6]).unwrap();
        let (a, b): (f64, f64) = (back.data().iter().sum(), g.data().iter().sum());
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let map = random_tensor::<f64>(&[1, 6, 6], 4);
        let boxes = [bbox(0.15, 0.2, 0.8, 0.7)];
        let cfg = RoiConfig::default();
        let probe = random_tensor::<f64>(&[1, 1, 5, 5], 5);
        let analytic = roi_align_backward(&probe, &boxes, &cfg, map.shape()).unwrap();
        let numeric = numeric_grad(&map, |m| {
            roi_align_forward(m, &boxes, &cfg).unwrap().dot(&probe)
        });
        assert!(max_relative_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn backward_is_adjoint() {
        let mut r = rng(6);
        let cfg = RoiConfig::default();
        for seed in 0..20 {
            let map = random_tensor::<f64>(&[3, 9, 7], 100 + seed);
            let boxes: Vec<_> = (0..3).map(|_| random_box(&mut r)).collect();
            let g = random_tensor::<f64>(&[3, 3, 5, 5], 200 + seed);
            let fwd = roi_align_forward(&map, &boxes, &cfg).unwrap();
            let back = roi_align_backward(&g, &boxes, &cfg, map.shape()).unwrap();
            assert!((fwd.dot(&g) - map.dot(&back)).abs() < 1e-10);
        }
    }

    #[test]
    fn batch_indexing_reads_the_right_image() {
        let a = random_tensor::<f64>(&[2, 5, 5], 7);
        let b = random_tensor::<f64>(&[2, 5, 5], 8);
        let both = Tensor::from_vec(&[2, 2, 5, 5], [a.data(), b.data()].concat());
        let bx = bbox(0.1, 0.1, 0.9, 0.6);
        let cfg = RoiConfig::default();
        let batched = roi_align_batch_forward(&both, &[Roi { image: 1, bbox: bx }], &cfg).unwrap();
        assert_eq!(
            batched.data(),
            roi_align_forward(&b, &[bx], &cfg).unwrap().data()
        );
        assert!(roi_align_batch_forward(&both, &[Roi { image: 2, bbox: bx }], &cfg).is_err());
    }

    proptest! {
        #[test]
        fn output_is_convex_combination(seed in 0u64..1000, x1 in 0.0..0.5f64, y1 in 0.0..0.5f64, dw in 0.0..0.5f64, dh in 0.0..0.5f64) {
            let map = random_tensor::<f64>(&[1, 7, 5], seed);
            let out = roi_align_forward(&map, &[bbox(x1, y1, x1 + dw, y1 + dh)], &RoiConfig::default()).unwrap();
            let lo = map.data().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = map.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out.data().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        }

        #[test]
        fn forward_is_linear(seed in 0u64..1000, a in -3.0..3.0f64, b in -3.0..3.0f64) {
            let f1 = random_tensor::<f64>(&[2, 6, 6], seed);
            let f2 = random_tensor::<f64>(&[2, 6, 6], seed + 1);
            let bx = [bbox(0.05, 0.2, 0.85, 0.95)];
            let cfg = RoiConfig::default();
            let mix = Tensor::from_vec(f1.shape(), f1.data().iter().zip(f2.data()).map(|(x, y)| a * x + b * y).collect());
            let lhs = roi_align_forward(&mix, &bx, &cfg).unwrap();
            let o1 = roi_align_forward(&f1, &bx, &cfg).unwrap();
            let o2 = roi_align_forward(&f2, &bx, &cfg).unwrap();
            for ((l, x), y) in lhs.data().iter().zip(o1.data()).zip(o2.data()) {
                prop_assert!((l - (a * x + b * y)).abs() < 1e-10);
            }
        }
    }
}
