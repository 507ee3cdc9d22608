use serde::{Deserialize, Serialize};

use crate::dataio::Frame;
use crate::error::{Error, Result};

/// Dense displacement field in pixels per frame; `u` is positive rightward,
/// `v` positive downward.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub height: usize,
    pub width: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            u: vec![0.0; height * width],
            v: vec![0.0; height * width],
        }
    }

    pub fn constant(height: usize, width: usize, u: f64, v: f64) -> Self {
        Self {
            height,
            width,
            u: vec![u; height * width],
            v: vec![v; height * width],
        }
    }

    pub fn magnitude(&self, i: usize) -> f64 {
        self.u[i].hypot(self.v[i])
    }

    pub fn max_abs_component(&self) -> f64 {
        self.u
            .iter()
            .chain(&self.v)
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    /// Smoothness weight of the global regularizer, in 8-bit intensity
    /// levels (the solver works on luma in `[0, 1]` and divides by 255).
    pub alpha: f64,
    pub iterations: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            iterations: 200,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || self.iterations == 0 {
            return Err(Error::Config(format!(
                "flow solver needs alpha > 0 and iterations >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// A dense two-frame flow estimator.
pub trait FlowSolver {
    fn estimate(&self, a: &Frame, b: &Frame) -> Result<FlowField>;
}

/// Horn–Schunck global smoothness flow solved with Jacobi iterations.
#[derive(Debug, Clone, Copy, Default)]
pub struct HornSchunck {
    pub params: FlowParams,
}

impl FlowSolver for HornSchunck {
    fn estimate(&self, a: &Frame, b: &Frame) -> Result<FlowField> {
        estimate_flow(a, b, &self.params)
    }
}

/// Intensity in `[0, 1]` of a normalized frame: Rec. 601 luma of the
/// underlying 8-bit values for RGB, the plane itself for one channel.
pub fn luma(frame: &Frame) -> Vec<f64> {
    let to_unit = |x: f64| (x + 1.0) / 2.0;
    match frame.channels {
        3 => {
            let (r, g, b) = (frame.plane(0), frame.plane(1), frame.plane(2));
            r.iter()
                .zip(g)
                .zip(b)
                .map(|((&r, &g), &b)| 0.299 * to_unit(r) + 0.587 * to_unit(g) + 0.114 * to_unit(b))
                .collect()
        }
        _ => frame.plane(0).iter().map(|&x| to_unit(x)).collect(),
    }
}

/// Minimizes `Σ (Ix u + Iy v + It)² + α² (|∇u|² + |∇v|²)` over the frame pair.
///
/// Intensities are luma in `[0, 1]`; `params.alpha` is given in 8-bit levels
/// and enters the energy as `alpha / 255`.
///
/// Spatial derivatives are central differences averaged over both frames,
/// the temporal derivative is the frame difference, and borders replicate.
pub fn estimate_flow(a: &Frame, b: &Frame, params: &FlowParams) -> Result<FlowField> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "flow frames differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    params.validate()?;
    let (h, w) = (a.height, a.width);
    let i1 = luma(a);
    let i2 = luma(b);
    let n = h * w;
    let mut ix = vec![0.0; n];
    let mut iy = vec![0.0; n];
    let mut it = vec![0.0; n];
    for y in 0..h {
        let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let i = y * w + x;
            let dx = |img: &[f64]| (img[y * w + xp] - img[y * w + xm]) / 2.0;
            let dy = |img: &[f64]| (img[yp * w + x] - img[ym * w + x]) / 2.0;
            ix[i] = (dx(&i1) + dx(&i2)) / 2.0;
            iy[i] = (dy(&i1) + dy(&i2)) / 2.0;
            it[i] = i2[i] - i1[i];
        }
    }
    let alpha = params.alpha / 255.0;
    let alpha2 = alpha * alpha;
    let denom: Vec<f64> = ix
        .iter()
        .zip(&iy)
        .map(|(gx, gy)| alpha2 + gx * gx + gy * gy)
        .collect();

    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut u_avg = vec![0.0; n];
    let mut v_avg = vec![0.0; n];
    for _ in 0..params.iterations {
        neighbourhood_average(&u, h, w, &mut u_avg);
        neighbourhood_average(&v, h, w, &mut v_avg);
        for i in 0..n {
            let t = (ix[i] * u_avg[i] + iy[i] * v_avg[i] + it[i]) / denom[i];
            u[i] = u_avg[i] - ix[i] * t;
            v[i] = v_avg[i] - iy[i] * t;
        }
    }
    Ok(FlowField {
        height: h,
        width: w,
        u,
        v,
    })
}

/// Horn–Schunck Laplacian weights: 1/6 for edge neighbours, 1/12 for corners.
fn neighbourhood_average(src: &[f64], h: usize, w: usize, dst: &mut [f64]) {
    let cell = |up: &[f64], mid: &[f64], down: &[f64], l: usize, x: usize, r: usize| {
        let edges = up[x] + down[x] + mid[l] + mid[r];
        let corners = up[l] + up[r] + down[l] + down[r];
        edges / 6.0 + corners / 12.0
    };
    for y in 0..h {
        let row = |r: usize| &src[r * w..(r + 1) * w];
        let (up, mid, down) = (row(y.saturating_sub(1)), row(y), row((y + 1).min(h - 1)));
        let out = &mut dst[y * w..(y + 1) * w];
        out[0] = cell(up, mid, down, 0, 0, 1.min(w - 1));
        for x in 1..w.saturating_sub(1) {
            out[x] = cell(up, mid, down, x - 1, x, x + 1);
        }
        if w > 1 {
            out[w - 1] = cell(up, mid, down, w - 2, w - 1, w - 1);
        }
    }
}
