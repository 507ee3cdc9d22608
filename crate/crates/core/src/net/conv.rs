use crate::error::{Error, Result};
use crate::net::tensor::{matmul, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl Default for ConvGeometry {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 1,
        }
    }
}

struct Dims {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

fn dims<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>, g: ConvGeometry) -> Result<Dims> {
    let (&[batch, c_in, h, w], &[c_out, kc, kh, kw]) = (input.shape(), kernel.shape()) else {
        return Err(Error::Shape(format!(
            "conv2d expects 4-d input and kernel, got {:?} and {:?}",
            input.shape(),
            kernel.shape()
        )));
    };
    if kc != c_in {
        return Err(Error::Shape(format!(
            "kernel expects {kc} input channels, input has {c_in}"
        )));
    }
    if g.stride == 0 {
        return Err(Error::Shape("stride must be at least 1".into()));
    }
    let (ph, pw) = (h + 2 * g.padding, w + 2 * g.padding);
    if kh > ph || kw > pw || (ph - kh) % g.stride != 0 || (pw - kw) % g.stride != 0 {
        return Err(Error::Shape(format!(
            "non-integral conv output: {h}x{w} input, {kh}x{kw} kernel, stride {}, padding {}",
            g.stride, g.padding
        )));
    }
    Ok(Dims {
        batch,
        c_in,
        h,
        w,
        c_out,
        kh,
        kw,
        ho: (ph - kh) / g.stride + 1,
        wo: (pw - kw) / g.stride + 1,
    })
}

/// Unfolds one image into a `(C·kh·kw) × (Ho·Wo)` column matrix.
fn im2col<T: Scalar>(img: &[T], d: &Dims, g: ConvGeometry, cols: &mut [T]) {
    let n_out = d.ho * d.wo;
    for c in 0..d.c_in {
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = ((c * d.kh + ky) * d.kw + kx) * n_out;
                for oy in 0..d.ho {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    let dst = &mut cols[row + oy * d.wo..row + (oy + 1) * d.wo];
                    if iy < 0 || iy >= d.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src =
                        &img[(c * d.h + iy as usize) * d.w..(c * d.h + iy as usize + 1) * d.w];
                    for (ox, slot) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        *slot = if ix < 0 || ix >= d.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into an image gradient.
fn col2im<T: Scalar>(cols: &[T], d: &Dims, g: ConvGeometry, img: &mut [T]) {
    let n_out = d.ho * d.wo;
    for c in 0..d.c_in {
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = ((c * d.kh + ky) * d.kw + kx) * n_out;
                for oy in 0..d.ho {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let base = (c * d.h + iy as usize) * d.w;
                    for ox in 0..d.wo {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && ix < d.w as isize {
                            img[base + ix as usize] += cols[row + oy * d.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Zero-padded cross-correlation: `(B, C_in, H, W) → (B, C_out, H', W')`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    g: ConvGeometry,
) -> Result<Tensor<T>> {
    let d = dims(input, kernel, g)?;
    if bias.len() != d.c_out {
        return Err(Error::Shape(format!(
            "bias has {} entries for {} filters",
            bias.len(),
            d.c_out
        )));
    }
    let ckk = d.c_in * d.kh * d.kw;
    let n_out = d.ho * d.wo;
    let in_size = d.c_in * d.h * d.w;
    let mut out = Tensor::zeros(&[d.batch, d.c_out, d.ho, d.wo]);
    let mut cols = vec![T::zero(); ckk * n_out];
    for b in 0..d.batch {
        im2col(
            &input.data()[b * in_size..(b + 1) * in_size],
            &d,
            g,
            &mut cols,
        );
        let dst = &mut out.data_mut()[b * d.c_out * n_out..(b + 1) * d.c_out * n_out];
        for (o, plane) in dst.chunks_mut(n_out).enumerate() {
            plane.fill(bias.data()[o]);
        }
        matmul(
            kernel.data(),
            false,
            &cols,
            false,
            d.c_out,
            ckk,
            n_out,
            dst,
            true,
        );
    }
    Ok(out)
}

pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Gradients of [`conv2d_forward`] with respect to input, kernel and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    g: ConvGeometry,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let d = dims(input, kernel, g)?;
    if grad_out.shape() != [d.batch, d.c_out, d.ho, d.wo] {
        return Err(Error::Shape(format!(
            "conv grad_out {:?}, expected {:?}",
            grad_out.shape(),
            [d.batch, d.c_out, d.ho, d.wo]
        )));
    }
    let ckk = d.c_in * d.kh * d.kw;
    let n_out = d.ho * d.wo;
    let in_size = d.c_in * d.h * d.w;
    let mut grad_k = Tensor::zeros(kernel.shape());
    let mut grad_b = Tensor::zeros(&[d.c_out]);
    let mut grad_in = Tensor::zeros(input.shape());
    let mut cols = vec![T::zero(); ckk * n_out];
    let mut grad_cols = vec![T::zero(); ckk * n_out];
    for b in 0..d.batch {
        let go = &grad_out.data()[b * d.c_out * n_out..(b + 1) * d.c_out * n_out];
        for (o, plane) in go.chunks(n_out).enumerate() {
            grad_b.data_mut()[o] += plane.iter().copied().sum::<T>();
        }
        im2col(
            &input.data()[b * in_size..(b + 1) * in_size],
            &d,
            g,
            &mut cols,
        );
        matmul(
            go,
            false,
            &cols,
            true,
            d.c_out,
            n_out,
            ckk,
            grad_k.data_mut(),
            true,
        );
        if need_input_grad {
            matmul(
                kernel.data(),
                true,
                go,
                false,
                ckk,
                d.c_out,
                n_out,
                &mut grad_cols,
                false,
            );
            col2im(
                &grad_cols,
                &d,
                g,
                &mut grad_in.data_mut()[b * in_size..(b + 1) * in_size],
            );
        }
    }
    Ok(ConvGrads {
        input: grad_in,
        kernel: grad_k,
        bias: grad_b,
    })
}
