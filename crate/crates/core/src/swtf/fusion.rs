use serde::{Deserialize, Serialize};

use crate::dataio::{BoundingBox, Frame};
use crate::error::{Error, Result};
use crate::swtf::color::{color_wheel, direction_color};
use crate::swtf::{FlowField, FlowParams};

/// Magnitudes below this normalizer produce an all-zero map.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

pub const DEFAULT_WEIGHT: f64 = 0.033;

/// How flow magnitude is mapped onto the `[0, 1]` value channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormalizerRepr", into = "NormalizerRepr")]
pub enum MagnitudeNormalizer {
    /// Divide by the largest magnitude in the summed field.
    SnippetMax,
    /// Divide by a fixed cap in pixels.
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NormalizerRepr {
    Name(String),
    Cap(f64),
}

impl TryFrom<NormalizerRepr> for MagnitudeNormalizer {
    type Error = String;

    fn try_from(repr: NormalizerRepr) -> std::result::Result<Self, String> {
        match repr {
            NormalizerRepr::Name(n) if n == "snippet-max" => Ok(Self::SnippetMax),
            NormalizerRepr::Name(n) => Err(format!("unknown magnitude normalizer {n:?}")),
            NormalizerRepr::Cap(c) if c > 0.0 && c.is_finite() => Ok(Self::Fixed(c)),
            NormalizerRepr::Cap(c) => Err(format!("magnitude cap must be positive, got {c}")),
        }
    }
}

impl From<MagnitudeNormalizer> for NormalizerRepr {
    fn from(n: MagnitudeNormalizer) -> Self {
        match n {
            MagnitudeNormalizer::SnippetMax => NormalizerRepr::Name("snippet-max".into()),
            MagnitudeNormalizer::Fixed(c) => NormalizerRepr::Cap(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// `x_t := x_F ⊙ x_t`.
    Multiplicative,
    /// `x_t := (λ + (1 − λ) x_F) ⊙ x_t`.
    Blended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Segment count `K`.
    #[serde(rename = "K")]
    pub k: usize,
    /// `K − 1` flow weights; `None` means 0.033 each.
    pub weights: Option<Vec<f64>>,
    pub flow: FlowParams,
    pub normalizer: MagnitudeNormalizer,
    pub roi_masking: bool,
    /// Box dilation as a fraction of each box's own width and height.
    pub dilation: f64,
    pub mode: FusionMode,
    /// Blend floor λ in `[0, 1]`; λ = 1 disables fusion.
    pub blend_lambda: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            k: 3,
            weights: None,
            flow: FlowParams::default(),
            normalizer: MagnitudeNormalizer::SnippetMax,
            roi_masking: true,
            dilation: 0.1,
            mode: FusionMode::Blended,
            blend_lambda: 0.25,
        }
    }
}

impl FusionConfig {
    pub fn weights(&self) -> Vec<f64> {
        self.weights
            .clone()
            .unwrap_or_else(|| vec![DEFAULT_WEIGHT; self.k.saturating_sub(1)])
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!(
                "K must be at least 2, got {}",
                self.k
            )));
        }
        let weights = self.weights();
        if weights.len() != self.k - 1 {
            return Err(Error::Config(format!(
                "{} fusion weights given for K = {}",
                weights.len(),
                self.k
            )));
        }
        validate_weights(&weights)?;
        self.flow.validate()?;
        if !(0.0..=1.0).contains(&self.blend_lambda) {
            return Err(Error::Config(format!(
                "blend_lambda must lie in [0, 1], got {}",
                self.blend_lambda
            )));
        }
        if !(self.dilation >= 0.0 && self.dilation.is_finite()) {
            return Err(Error::Config(format!(
                "dilation must be non-negative, got {}",
                self.dilation
            )));
        }
        Ok(())
    }
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Config(format!(
            "fusion weights must be non-negative, got {weights:?}"
        )));
    }
    if !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::Config(
            "at least one fusion weight must be positive".into(),
        ));
    }
    Ok(())
}

/// Per-pixel `C×H×W` weight map with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionMap(pub Frame);

impl FusionMap {
    pub fn frame(&self) -> &Frame {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.data.iter().all(|&x| x == 0.0)
    }
}

/// Vector sum `Σ W_i · OF_i` of the sampled flows.
pub fn weighted_flow_sum(flows: &[FlowField], weights: &[f64]) -> Result<FlowField> {
    if flows.is_empty() || flows.len() != weights.len() {
        return Err(Error::Config(format!(
            "{} flows but {} weights",
            flows.len(),
            weights.len()
        )));
    }
    let (h, w) = (flows[0].height, flows[0].width);
    if flows.iter().any(|f| (f.height, f.width) != (h, w)) {
        return Err(Error::Shape("flows to fuse differ in shape".into()));
    }
    let mut sum = FlowField::zeros(h, w);
    for (flow, &wt) in flows.iter().zip(weights) {
        for i in 0..h * w {
            sum.u[i] += wt * flow.u[i];
            sum.v[i] += wt * flow.v[i];
        }
    }
    Ok(sum)
}

/// Pixels whose centers fall inside the union of all boxes, each grown by
/// `dilation` of its own extent and clamped to the image.
pub fn roi_mask(
    boxes: &[Vec<BoundingBox>],
    height: usize,
    width: usize,
    dilation: f64,
) -> Vec<bool> {
    let mut mask = vec![false; height * width];
    for b in boxes.iter().flatten() {
        let (dx, dy) = (dilation * b.width(), dilation * b.height());
        let x1 = (b.x1 - dx).max(0.0) * width as f64;
        let x2 = (b.x2 + dx).min(1.0) * width as f64;
        let y1 = (b.y1 - dy).max(0.0) * height as f64;
        let y2 = (b.y2 + dy).min(1.0) * height as f64;
        for y in 0..height {
            let cy = y as f64 + 0.5;
            if cy < y1 || cy > y2 {
                continue;
            }
            for x in 0..width {
                let cx = x as f64 + 0.5;
                if cx >= x1 && cx <= x2 {
                    mask[y * width + x] = true;
                }
            }
        }
    }
    mask
}

/// Color-wheel rendering: hue from direction, value `|F| / normalizer`
/// clipped to 1, full saturation.
pub fn colorize_flow(flow: &FlowField, normalizer: f64) -> FusionMap {
    let (h, w) = (flow.height, flow.width);
    let mut map = Frame::zeros(3, h, w);
    if !(normalizer >= MAGNITUDE_FLOOR) {
        return FusionMap(map);
    }
    let wheel = color_wheel();
    for i in 0..h * w {
        let value = (flow.magnitude(i) / normalizer).min(1.0);
        if value == 0.0 {
            continue;
        }
        let rgb = direction_color(&wheel, flow.u[i], flow.v[i]);
        for (c, col) in rgb.iter().enumerate() {
            map.data[c * h * w + i] = (col * value).clamp(0.0, 1.0);
        }
    }
    FusionMap(map)
}

/// Fuses the `K − 1` sampled flows into a map.
///
/// Under snippet-max normalization the weights are first divided by their
/// maximum and rounded to single precision, which makes the map invariant to
/// rescaling all weights by the same factor.
pub fn fuse_flows(
    flows: &[FlowField],
    weights: &[f64],
    boxes: &[Vec<BoundingBox>],
    config: &FusionConfig,
) -> Result<FusionMap> {
    if flows.len() != weights.len() {
        return Err(Error::Config(format!(
            "weight count {} does not match flow count {}",
            weights.len(),
            flows.len()
        )));
    }
    validate_weights(weights)?;
    let effective: Vec<f64> = match config.normalizer {
        MagnitudeNormalizer::SnippetMax => {
            let max = weights.iter().fold(0.0f64, |m, &w| m.max(w));
            weights
                .iter()
                .map(|&w| f64::from((w / max) as f32))
                .collect()
        }
        MagnitudeNormalizer::Fixed(_) => weights.to_vec(),
    };
    let mut sum = weighted_flow_sum(flows, &effective)?;
    if config.roi_masking {
        let mask = roi_mask(boxes, sum.height, sum.width, config.dilation);
        for (i, keep) in mask.into_iter().enumerate() {
            if !keep {
                sum.u[i] = 0.0;
                sum.v[i] = 0.0;
            }
        }
    }
    let normalizer = match config.normalizer {
        MagnitudeNormalizer::SnippetMax => (0..sum.u.len())
            .map(|i| sum.magnitude(i))
            .fold(0.0, f64::max),
        MagnitudeNormalizer::Fixed(cap) => cap,
    };
    Ok(colorize_flow(&sum, normalizer))
}

/// Applies the map to every frame according to the fusion mode.
pub fn apply_fusion(
    frames: &[Frame],
    map: &FusionMap,
    config: &FusionConfig,
) -> Result<Vec<Frame>> {
    let m = map.frame();
    frames
        .iter()
        .map(|f| {
            if !f.same_shape(m) {
                return Err(Error::Shape(format!(
                    "fusion map {:?} vs frame {:?}",
                    m.shape(),
                    f.shape()
                )));
            }
            let lambda = config.blend_lambda;
            let data = f
                .data
                .iter()
                .zip(&m.data)
                .map(|(&x, &xf)| match config.mode {
                    FusionMode::Multiplicative => xf * x,
                    FusionMode::Blended => (lambda + (1.0 - lambda) * xf) * x,
                })
                .collect();
            Ok(Frame::from_data(f.channels, f.height, f.width, data))
        })
        .collect()
}
