//! Sparse segment sampling, dense optical flow and weighted temporal fusion.

pub mod color;
mod flow;
mod fusion;
mod segments;

use std::cell::Cell;

pub use flow::{estimate_flow, luma, FlowField, FlowParams, FlowSolver, HornSchunck};
pub use fusion::{
    apply_fusion, colorize_flow, fuse_flows, roi_mask, weighted_flow_sum, FusionConfig, FusionMap,
    FusionMode, MagnitudeNormalizer, DEFAULT_WEIGHT, MAGNITUDE_FLOOR,
};
pub use segments::{plan_segments, sample_indices, SampledIndices, SamplingMode, SegmentPlan};

use crate::dataio::{BoundingBox, Frame};
use crate::error::{Error, Result};

/// Wraps a solver and counts how often it is invoked.
pub struct CountingSolver<'a> {
    inner: &'a dyn FlowSolver,
    calls: Cell<usize>,
}

impl<'a> CountingSolver<'a> {
    pub fn new(inner: &'a dyn FlowSolver) -> Self {
        Self {
            inner,
            calls: Cell::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl FlowSolver for CountingSolver<'_> {
    fn estimate(&self, a: &Frame, b: &Frame) -> Result<FlowField> {
        self.calls.set(self.calls.get() + 1);
        self.inner.estimate(a, b)
    }
}

/// Result of running the fusion front end over one snippet.
#[derive(Debug, Clone)]
pub struct FusedSnippet {
    pub frames: Vec<Frame>,
    pub indices: SampledIndices,
    pub map: FusionMap,
    pub flow_solves: usize,
}

/// Segment plan → one frame per segment → `K − 1` flows between consecutive
/// samples → fusion map → applied to all `T` frames.
pub fn swtf_preprocess_with(
    frames: &[Frame],
    boxes: &[Vec<BoundingBox>],
    config: &FusionConfig,
    mode: SamplingMode,
    seed: u64,
    solver: &dyn FlowSolver,
) -> Result<FusedSnippet> {
    config.validate()?;
    if boxes.len() != frames.len() {
        return Err(Error::Shape(format!(
            "{} box lists for {} frames",
            boxes.len(),
            frames.len()
        )));
    }
    let plan = plan_segments(frames.len(), config.k)?;
    let indices = sample_indices(&plan, mode, seed);
    let counter = CountingSolver::new(solver);
    let flows = indices
        .pairs()
        .map(|(a, b)| counter.estimate(&frames[a], &frames[b]))
        .collect::<Result<Vec<_>>>()?;
    let map = fuse_flows(&flows, &config.weights(), boxes, config)?;
    let fused = apply_fusion(frames, &map, config)?;
    Ok(FusedSnippet {
        frames: fused,
        indices,
        map,
        flow_solves: counter.calls(),
    })
}

/// [`swtf_preprocess_with`] using the configured Horn–Schunck solver.
pub fn swtf_preprocess(
    frames: &[Frame],
    boxes: &[Vec<BoundingBox>],
    config: &FusionConfig,
    mode: SamplingMode,
    seed: u64,
) -> Result<FusedSnippet> {
    let solver = HornSchunck {
        params: config.flow,
    };
    swtf_preprocess_with(frames, boxes, config, mode, seed, &solver)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moving_square(t: usize) -> (Vec<Frame>, Vec<Vec<BoundingBox>>) {
        let mut frames = Vec::new();
        let mut boxes = Vec::new();
        for i in 0..t {
            let mut f = Frame::filled(3, 24, 24, -0.5);
            for y in 8..14 {
                for x in (4 + i)..(10 + i) {
                    for c in 0..3 {
                        *f.at_mut(c, y, x) = 0.8;
                    }
                }
            }
            frames.push(f);
            boxes.push(vec![BoundingBox {
                x1: (4 + i) as f64 / 24.0,
                x2: (10 + i) as f64 / 24.0,
                y1: 8.0 / 24.0,
                y2: 14.0 / 24.0,
                track_id: 0,
                label: 0,
            }]);
        }
        (frames, boxes)
    }

    #[test]
    fn exactly_k_minus_one_solves() {
        let (frames, boxes) = moving_square(15);
        let out = swtf_preprocess(
            &frames,
            &boxes,
            &FusionConfig::default(),
            SamplingMode::Random,
            3,
        )
        .unwrap();
        assert_eq!(out.flow_solves, 2);
        assert_eq!(out.frames.len(), 15);
        let config = FusionConfig {
            k: 5,
            ..Default::default()
        };
        let out = swtf_preprocess(&frames, &boxes, &config, SamplingMode::Center, 0).unwrap();
        assert_eq!(out.flow_solves, 4);
    }

    #[test]
    fn static_snippet_blends_to_lambda_times_input() {
        let frame = moving_square(1).0.remove(0);
        let frames = vec![frame; 15];
        let boxes = vec![moving_square(1).1.remove(0); 15];
        let out = swtf_preprocess(
            &frames,
            &boxes,
            &FusionConfig::default(),
            SamplingMode::Random,
            9,
        )
        .unwrap();
        assert!(out.map.is_zero());
        for (o, f) in out.frames.iter().zip(&frames) {
            assert!(o.data.iter().zip(&f.data).all(|(&y, &x)| y == 0.25 * x));
        }
    }

    #[test]
    fn rightward_motion_is_reddish() {
        let (frames, boxes) = moving_square(15);
        let out = swtf_preprocess(
            &frames,
            &boxes,
            &FusionConfig::default(),
            SamplingMode::Center,
            0,
        )
        .unwrap();
        let m = out.map.frame();
        let (r, g, b) = (
            m.plane(0).iter().sum::<f64>(),
            m.plane(1).iter().sum::<f64>(),
            m.plane(2).iter().sum::<f64>(),
        );
        assert!(r > 2.0 * g && r > 2.0 * b, "r={r} g={g} b={b}");
    }

    #[test]
    fn preprocessing_is_deterministic() {
        let (frames, boxes) = moving_square(15);
        let config = FusionConfig::default();
        let a = swtf_preprocess(&frames, &boxes, &config, SamplingMode::Random, 77).unwrap();
        let b = swtf_preprocess(&frames, &boxes, &config, SamplingMode::Random, 77).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.indices, b.indices);
    }

    #[test]
    fn too_few_frames_for_k() {
        let (frames, boxes) = moving_square(2);
        assert!(swtf_preprocess(
            &frames,
            &boxes,
            &FusionConfig::default(),
            SamplingMode::Center,
            0
        )
        .is_err());
    }
}
