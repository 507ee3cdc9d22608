use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{save_manifest, save_snippet, BoundingBox, Manifest, RawFrame, Snippet};
use crate::error::{Error, Result};
use crate::util::{derive_seed, rng};

/// Class names in label order.
pub const SYNTH_CLASSES: [&str; 4] = ["right", "left", "down", "up"];

/// Written next to `manifest.json` so consumers can tell a synthetic root.
pub const SYNTH_SPEC_FILE: &str = "synth.json";

const BACKGROUND_LEVEL: f64 = 0.3;
const SPRITE_LEVEL: f64 = 0.9;

/// Parameters of the synthetic translating-sprite dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub snippets_per_class: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    /// Side of the square sprite, pixels.
    pub sprite_size: f64,
    /// Pixels per frame.
    pub speed: f64,
    /// Peak-to-peak amplitude of the static background noise, as a fraction
    /// of the 8-bit range.
    pub noise_amplitude: f64,
    /// Fraction of each class assigned to the test split.
    pub test_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            snippets_per_class: 50,
            t: 15,
            height: 64,
            width: 64,
            sprite_size: 12.0,
            speed: 1.0,
            noise_amplitude: 0.2,
            test_fraction: 0.2,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("infeasible synth spec: {m}")));
        if !(1..=SYNTH_CLASSES.len()).contains(&self.num_classes) {
            return fail(format!(
                "num_classes must be 1..=4, got {}",
                self.num_classes
            ));
        }
        if self.t < 2 {
            return fail(format!("T must be at least 2, got {}", self.t));
        }
        if self.height < 8 || self.width < 8 {
            return fail(format!(
                "frames must be at least 8x8, got {}x{}",
                self.width, self.height
            ));
        }
        if !(self.sprite_size >= 1.0 && self.speed >= 0.0) {
            return fail("sprite_size must be >= 1 and speed >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.noise_amplitude) || !(0.0..1.0).contains(&self.test_fraction)
        {
            return fail("noise_amplitude must lie in [0,1] and test_fraction in [0,1)".into());
        }
        let travel = self.sprite_size + self.speed * (self.t - 1) as f64;
        let vertical = self.num_classes > 2;
        if travel > self.width as f64 || (vertical && travel > self.height as f64) {
            return fail(format!(
                "sprite of size {} moving {} px/frame for {} frames leaves the {}x{} frame",
                self.sprite_size, self.speed, self.t, self.width, self.height
            ));
        }
        if self.sprite_size > self.width.min(self.height) as f64 {
            return fail("sprite larger than frame".into());
        }
        Ok(())
    }

    pub fn classes(&self) -> Vec<String> {
        SYNTH_CLASSES[..self.num_classes]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }
}

/// One straight-line sprite path with its static background. Paired classes
/// (right/left, down/up) share a trajectory and traverse it in opposite order.
struct Trajectory {
    /// Sprite centers `(x, y)` in pixels, in the forward (increasing) order.
    centers: Vec<(f64, f64)>,
    background: Vec<u8>,
}

fn sample_trajectory(spec: &SynthSpec, seed: u64, vertical: bool) -> Trajectory {
    let mut r = rng(seed);
    let half = spec.sprite_size / 2.0;
    let span = spec.speed * (spec.t - 1) as f64;
    let (along_len, across_len) = if vertical {
        (spec.height as f64, spec.width as f64)
    } else {
        (spec.width as f64, spec.height as f64)
    };
    let start = half + r.random::<f64>() * (along_len - 2.0 * half - span);
    let across = half + r.random::<f64>() * (across_len - 2.0 * half);
    let centers = (0..spec.t)
        .map(|t| {
            let along = start + spec.speed * t as f64;
            if vertical {
                (across, along)
            } else {
                (along, across)
            }
        })
        .collect();
    let background = (0..3 * spec.width * spec.height)
        .map(|_| {
            let v = BACKGROUND_LEVEL + spec.noise_amplitude * (r.random::<f64>() - 0.5);
            (v * 255.0).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Trajectory {
        centers,
        background,
    }
}

fn coverage(lo: f64, hi: f64, pixel: usize) -> f64 {
    let p = pixel as f64;
    (hi.min(p + 1.0) - lo.max(p)).max(0.0)
}

fn render(spec: &SynthSpec, background: &[u8], center: (f64, f64)) -> RawFrame {
    let half = spec.sprite_size / 2.0;
    let (x_lo, x_hi) = (center.0 - half, center.0 + half);
    let (y_lo, y_hi) = (center.1 - half, center.1 + half);
    let mut frame = RawFrame {
        width: spec.width,
        height: spec.height,
        pixels: background.to_vec(),
    };
    let sprite = SPRITE_LEVEL * 255.0;
    let ys = (y_lo.floor().max(0.0) as usize)..(y_hi.ceil() as usize).min(spec.height);
    for y in ys {
        let cy = coverage(y_lo, y_hi, y);
        for x in (x_lo.floor().max(0.0) as usize)..(x_hi.ceil() as usize).min(spec.width) {
            let cov = cy * coverage(x_lo, x_hi, x);
            let i = 3 * (y * spec.width + x);
            for p in &mut frame.pixels[i..i + 3] {
                let v = f64::from(*p) * (1.0 - cov) + sprite * cov;
                *p = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    frame
}

fn build_snippet(spec: &SynthSpec, traj: &Trajectory, label: usize, reversed: bool) -> Snippet {
    let half = spec.sprite_size / 2.0;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let mut order: Vec<(f64, f64)> = traj.centers.clone();
    if reversed {
        order.reverse();
    }
    let frames = order
        .iter()
        .map(|&c| render(spec, &traj.background, c))
        .collect();
    let boxes = order
        .iter()
        .map(|&(cx, cy)| {
            vec![BoundingBox {
                x1: ((cx - half) / w).clamp(0.0, 1.0),
                x2: ((cx + half) / w).clamp(0.0, 1.0),
                y1: ((cy - half) / h).clamp(0.0, 1.0),
                y2: ((cy + half) / h).clamp(0.0, 1.0),
                track_id: 0,
                label,
            }]
        })
        .collect();
    Snippet {
        frames,
        boxes,
        classes: spec.classes(),
    }
}

/// Builds snippet `index` of class `label` without touching the filesystem.
pub(crate) fn synth_snippet(spec: &SynthSpec, seed: u64, label: usize, index: usize) -> Snippet {
    let vertical = label >= 2;
    let traj = sample_trajectory(
        spec,
        derive_seed(seed, &[index as u64, vertical as u64]),
        vertical,
    );
    build_snippet(spec, &traj, label, label % 2 == 1)
}

/// Writes `<class>_<nnnn>/` snippet directories and an 80:20-style
/// `manifest.json` under `out`.
pub fn synth_generate(spec: &SynthSpec, seed: u64, out: &Path) -> Result<Manifest> {
    spec.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest = Manifest::default();
    let n = spec.snippets_per_class;
    let n_test = (n as f64 * spec.test_fraction).round() as usize;
    for (label, class) in SYNTH_CLASSES[..spec.num_classes].iter().enumerate() {
        let mut names = Vec::with_capacity(n);
        for index in 0..n {
            let name = format!("{class}_{index:04}");
            save_snippet(&synth_snippet(spec, seed, label, index), &out.join(&name))?;
            names.push(name);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng(derive_seed(seed, &[u64::MAX, label as u64])));
        let (test, train) = order.split_at(n_test);
        let mut test = test.to_vec();
        let mut train = train.to_vec();
        test.sort_unstable();
        train.sort_unstable();
        manifest
            .test
            .extend(test.into_iter().map(|i| names[i].clone()));
        manifest
            .train
            .extend(train.into_iter().map(|i| names[i].clone()));
    }
    save_manifest(out, &manifest)?;
    let spec_path = out.join(SYNTH_SPEC_FILE);
    let json = serde_json::to_string_pretty(spec).map_err(|e| Error::json(&spec_path, e))?;
    std::fs::write(&spec_path, json + "\n").map_err(|e| Error::io(&spec_path, e))?;
    Ok(manifest)
}

/// The `SynthSpec` a synthetic dataset root was generated from, if any.
pub fn load_synth_spec(root: &Path) -> Result<Option<SynthSpec>> {
    let path = root.join(SYNTH_SPEC_FILE);
    match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::json(&path, e)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(&path, e)),
    }
}
