//! Input builders shared by the criterion benchmarks.

use swtf_core::dataio::{BoundingBox, Frame};
use swtf_core::Tensor;

/// A bright square drifting one pixel per frame to the right over a
/// gradient background, with a box tracking it.
pub fn drifting_square(
    t: usize,
    height: usize,
    width: usize,
) -> (Vec<Frame>, Vec<Vec<BoundingBox>>) {
    let side = (height.min(width) / 5).max(2);
    let y0 = (height - side) / 2;
    let mut frames = Vec::with_capacity(t);
    let mut boxes = Vec::with_capacity(t);
    for i in 0..t {
        let x0 = (i + width / 8).min(width - side);
        let mut f = Frame::zeros(3, height, width);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    let inside = (y0..y0 + side).contains(&y) && (x0..x0 + side).contains(&x);
                    let bg = (x + 2 * y + 7 * c) as f64 / (width + 2 * height + 14) as f64 - 0.5;
                    *f.at_mut(c, y, x) = if inside { 0.9 } else { bg };
                }
            }
        }
        frames.push(f);
        boxes.push(vec![BoundingBox {
            x1: x0 as f64 / width as f64,
            y1: y0 as f64 / height as f64,
            x2: (x0 + side) as f64 / width as f64,
            y2: (y0 + side) as f64 / height as f64,
            track_id: 0,
            label: 0,
        }]);
    }
    (frames, boxes)
}

/// Deterministic pseudo-random tensor in `[-1, 1)`.
pub fn tensor(shape: &[usize], seed: u64) -> Tensor<f32> {
    swtf_core::net::fd::random_tensor(shape, seed)
}
