use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::rng;

/// Partition of `0..T` into `K` contiguous segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentPlan {
    frames: usize,
    /// `K + 1` boundaries, `0 = b_0 < b_1 < … < b_K = T`.
    boundaries: Vec<usize>,
}

impl SegmentPlan {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn segments(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Half-open frame range of segment `i` (zero-based).
    pub fn segment(&self, i: usize) -> std::ops::Range<usize> {
        self.boundaries[i]..self.boundaries[i + 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.boundaries.windows(2).map(|w| w[0]..w[1])
    }
}

/// Splits `frames` frames into `segments` near-equal blocks with boundaries
/// `floor(i * T / K)`.
pub fn plan_segments(frames: usize, segments: usize) -> Result<SegmentPlan> {
    if segments < 2 {
        return Err(Error::Config(format!(
            "segment count must be at least 2 to form a flow pair, got {segments}"
        )));
    }
    if segments > frames {
        return Err(Error::Config(format!(
            "segment count {segments} exceeds frame count {frames}"
        )));
    }
    let boundaries = (0..=segments).map(|i| i * frames / segments).collect();
    Ok(SegmentPlan { frames, boundaries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Uniform draw inside each segment (training).
    Random,
    /// The middle frame of each segment (evaluation).
    Center,
}

/// One frame index per segment, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledIndices(pub Vec<usize>);

impl SampledIndices {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Consecutive `(F_i, F_{i+1})` pairs fed to the flow solver.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }
}

pub fn sample_indices(plan: &SegmentPlan, mode: SamplingMode, seed: u64) -> SampledIndices {
    match mode {
        SamplingMode::Center => {
            SampledIndices(plan.iter().map(|r| (r.start + r.end - 1) / 2).collect())
        }
        SamplingMode::Random => {
            let mut r = rng(seed);
            SampledIndices(plan.iter().map(|seg| r.random_range(seg)).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_frames_three_segments() {
        let plan = plan_segments(15, 3).unwrap();
        let segs: Vec<_> = plan.iter().collect();
        assert_eq!(segs, vec![0..5, 5..10, 10..15]);
        assert_eq!(
            sample_indices(&plan, SamplingMode::Center, 0).0,
            vec![2, 7, 12]
        );
    }

    #[test]
    fn uneven_partition() {
        let plan = plan_segments(7, 3).unwrap();
        assert_eq!(plan.boundaries(), &[0, 2, 4, 7]);
    }

    #[test]
    fn one_frame_per_segment_forces_sampling() {
        let plan = plan_segments(4, 4).unwrap();
        for seed in 0..20 {
            assert_eq!(
                sample_indices(&plan, SamplingMode::Random, seed).0,
                vec![0, 1, 2, 3]
            );
        }
    }

    #[test]
    fn invalid_counts_are_rejected() {
        assert!(plan_segments(10, 1).is_err());
        assert!(plan_segments(3, 4).is_err());
    }

    #[test]
    fn samples_stay_in_their_segment() {
        for t in 2..40 {
            for k in 2..=t {
                let plan = plan_segments(t, k).unwrap();
                for (seed, mode) in [
                    (1, SamplingMode::Random),
                    (2, SamplingMode::Random),
                    (0, SamplingMode::Center),
                ] {
                    let idx = sample_indices(&plan, mode, seed);
                    assert_eq!(idx.0.len(), k);
                    for (i, &f) in idx.0.iter().enumerate() {
                        assert!(plan.segment(i).contains(&f));
                    }
                    assert!(idx.0.windows(2).all(|w| w[0] < w[1]));
                }
            }
        }
    }
}
