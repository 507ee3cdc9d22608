/// An 8-bit RGB image in row-major, channel-interleaved order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RawFrame {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; 3 * width * height],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// A planar `C×H×W` image of real values.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Frame {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_data(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width, "frame data length");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

/// Maps 8-bit values onto `[-1, 1]` via `(x / 255 - 0.5) * 2`.
pub fn normalize_frame(raw: &RawFrame) -> Frame {
    let (h, w) = (raw.height, raw.width);
    let mut out = Frame::zeros(3, h, w);
    for y in 0..h {
        for x in 0..w {
            let px = raw.pixel(x, y);
            for (c, &v) in px.iter().enumerate() {
                *out.at_mut(c, y, x) = (f64::from(v) / 255.0 - 0.5) * 2.0;
            }
        }
    }
    out
}

/// Inverse of [`normalize_frame`], rounding and clamping to 8 bits.
pub fn denormalize_frame(frame: &Frame) -> RawFrame {
    assert_eq!(frame.channels, 3, "raw frames are RGB");
    let mut raw = RawFrame::new(frame.width, frame.height);
    for y in 0..frame.height {
        for x in 0..frame.width {
            let mut rgb = [0u8; 3];
            for (c, slot) in rgb.iter_mut().enumerate() {
                let v = (frame.at(c, y, x) / 2.0 + 0.5) * 255.0;
                *slot = v.round().clamp(0.0, 255.0) as u8;
            }
            raw.set_pixel(x, y, rgb);
        }
    }
    raw
}

/// Bilinear resize with half-pixel centers.
///
/// Returns the resized frame and the `(target / source)` scale factors per
/// axis. Source coordinates are clamped to the valid range, so edge pixels
/// replicate outward.
pub fn resize_bilinear(frame: &Frame, target_h: usize, target_w: usize) -> (Frame, (f64, f64)) {
    assert!(
        target_h >= 1 && target_w >= 1,
        "resize target must be non-empty"
    );
    let (c, h, w) = frame.shape();
    let scale = (target_h as f64 / h as f64, target_w as f64 / w as f64);
    if (h, w) == (target_h, target_w) {
        return (frame.clone(), scale);
    }
    let ys = axis_taps(h, target_h);
    let xs = axis_taps(w, target_w);
    let mut out = Frame::zeros(c, target_h, target_w);
    for ch in 0..c {
        let plane = frame.plane(ch);
        for (oy, &(y0, y1, ty)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, tx)) in xs.iter().enumerate() {
                let top = lerp(plane[y0 * w + x0], plane[y0 * w + x1], tx);
                let bottom = lerp(plane[y1 * w + x0], plane[y1 * w + x1], tx);
                *out.at_mut(ch, oy, ox) = lerp(top, bottom, ty);
            }
        }
    }
    (out, scale)
}

/// Resizes an 8-bit frame through [`resize_bilinear`], rounding back to bytes.
pub fn resize_raw(raw: &RawFrame, target_h: usize, target_w: usize) -> (RawFrame, (f64, f64)) {
    let mut planar = Frame::zeros(3, raw.height, raw.width);
    for y in 0..raw.height {
        for x in 0..raw.width {
            for (c, v) in raw.pixel(x, y).into_iter().enumerate() {
                *planar.at_mut(c, y, x) = f64::from(v);
            }
        }
    }
    let (resized, scale) = resize_bilinear(&planar, target_h, target_w);
    let mut out = RawFrame::new(target_w, target_h);
    for y in 0..target_h {
        for x in 0..target_w {
            let rgb = [0, 1, 2].map(|c| resized.at(c, y, x).round().clamp(0.0, 255.0) as u8);
            out.set_pixel(x, y, rgb);
        }
    }
    (out, scale)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // `a + t * (b - a)` keeps constant regions exactly constant.
    a + t * (b - a)
}

/// Per output index: (lower source index, upper source index, fraction).
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let ratio = src as f64 / dst as f64;
    let max = (src - 1) as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * ratio - 0.5).clamp(0.0, max);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}
