use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{BoundingBox, RawFrame, Snippet};
use crate::error::{Error, Result};
use crate::util::{derive_seed, rng};

const CROP_ATTEMPTS: u64 = 8;
const MIN_VISIBLE_AREA: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Side length of the crop window as a fraction of the frame, in (0.5, 1].
    pub crop_fraction: f64,
    /// Whether a horizontal flip may be sampled (with probability 1/2).
    pub flip: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            crop_fraction: 0.8,
            flip: true,
        }
    }
}

pub fn flip_box(b: &BoundingBox) -> BoundingBox {
    BoundingBox {
        x1: 1.0 - b.x2,
        x2: 1.0 - b.x1,
        ..*b
    }
}

fn flip_frame(frame: &RawFrame) -> RawFrame {
    let mut out = frame.clone();
    for y in 0..frame.height {
        for x in 0..frame.width {
            out.set_pixel(frame.width - 1 - x, y, frame.pixel(x, y));
        }
    }
    out
}

pub fn flip_snippet(snippet: &Snippet) -> Snippet {
    Snippet {
        frames: snippet.frames.iter().map(flip_frame).collect(),
        boxes: snippet
            .boxes
            .iter()
            .map(|bs| bs.iter().map(flip_box).collect())
            .collect(),
        classes: snippet.classes.clone(),
    }
}

#[derive(Debug, Clone, Copy)]
struct Window {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
}

fn crop_frame(frame: &RawFrame, win: Window) -> RawFrame {
    let mut out = RawFrame::new(win.w, win.h);
    for y in 0..win.h {
        let src = 3 * ((win.y0 + y) * frame.width + win.x0);
        let dst = 3 * y * win.w;
        out.pixels[dst..dst + 3 * win.w].copy_from_slice(&frame.pixels[src..src + 3 * win.w]);
    }
    out
}

/// Re-expresses a box in window coordinates; `None` when less than a quarter
/// of its area stays visible.
fn crop_box(b: &BoundingBox, win: Window, width: usize, height: usize) -> Option<BoundingBox> {
    let (fw, fh) = (width as f64, height as f64);
    let (wx0, wy0) = (win.x0 as f64, win.y0 as f64);
    let (wx1, wy1) = (wx0 + win.w as f64, wy0 + win.h as f64);
    let ix1 = (b.x1 * fw).max(wx0);
    let ix2 = (b.x2 * fw).min(wx1);
    let iy1 = (b.y1 * fh).max(wy0);
    let iy2 = (b.y2 * fh).min(wy1);
    if ix2 <= ix1 || iy2 <= iy1 {
        return None;
    }
    let visible = (ix2 - ix1) * (iy2 - iy1);
    if visible < MIN_VISIBLE_AREA * b.area() * fw * fh {
        return None;
    }
    let nx = |v: f64| ((v - wx0) / win.w as f64).clamp(0.0, 1.0);
    let ny = |v: f64| ((v - wy0) / win.h as f64).clamp(0.0, 1.0);
    let out = BoundingBox {
        x1: nx(ix1),
        x2: nx(ix2),
        y1: ny(iy1),
        y2: ny(iy2),
        ..*b
    };
    out.is_valid().then_some(out)
}

/// Samples one crop window and one flip decision for the whole snippet.
///
/// When every subject box would be cropped away, a new window is drawn from a
/// sub-seed; after eight failed attempts only the flip is applied.
pub fn augment(snippet: &Snippet, config: &AugmentConfig, seed: u64) -> Result<Snippet> {
    if !(config.crop_fraction > 0.5 && config.crop_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "crop_fraction must lie in (0.5, 1], got {}",
            config.crop_fraction
        )));
    }
    let flip = config.flip && rng(derive_seed(seed, &[0])).random_bool(0.5);
    let (height, width) = snippet.dims();
    let cw = ((config.crop_fraction * width as f64).round() as usize).clamp(8.min(width), width);
    let ch = ((config.crop_fraction * height as f64).round() as usize).clamp(8.min(height), height);

    let mut cropped = None;
    if (cw, ch) != (width, height) {
        for attempt in 0..CROP_ATTEMPTS {
            let mut r = rng(derive_seed(seed, &[1, attempt]));
            let win = Window {
                x0: r.random_range(0..=width - cw),
                y0: r.random_range(0..=height - ch),
                w: cw,
                h: ch,
            };
            let boxes: Vec<Vec<BoundingBox>> = snippet
                .boxes
                .iter()
                .map(|bs| {
                    bs.iter()
                        .filter_map(|b| crop_box(b, win, width, height))
                        .collect()
                })
                .collect();
            if boxes.iter().any(|bs| !bs.is_empty()) {
                cropped = Some(Snippet {
                    frames: snippet.frames.iter().map(|f| crop_frame(f, win)).collect(),
                    boxes,
                    classes: snippet.classes.clone(),
                });
                break;
            }
        }
    }
    let base = cropped.unwrap_or_else(|| snippet.clone());
    Ok(if flip { flip_snippet(&base) } else { base })
}
