use crate::error::{Error, Result};
use crate::net::tensor::{Scalar, Tensor};

/// Marks pooling windows whose maximum activation is zero (nothing to route).
const NO_ROUTE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct PoolCache {
    /// Flat input index receiving each output's gradient, or `NO_ROUTE`.
    routes: Vec<usize>,
    input_shape: Vec<usize>,
}

/// `max(0, x)` followed by 2×2 stride-2 max pooling on `(B, C, H, W)`.
///
/// Odd extents behave as if padded with −∞. On ties the first element in
/// row-major window order wins.
pub fn relu_maxpool_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolCache)> {
    let &[b, c, h, w] = input.shape() else {
        return Err(Error::Shape(format!(
            "relu_maxpool expects 4-d input, got {:?}",
            input.shape()
        )));
    };
    let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Tensor::zeros(&[b, c, ho, wo]);
    let mut routes = vec![NO_ROUTE; b * c * ho * wo];
    let x = input.data();
    let dst = out.data_mut();
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..ho {
            let rows = 2 * oy..(2 * oy + 2).min(h);
            for ox in 0..wo {
                let mut best = T::zero();
                let mut route = NO_ROUTE;
                for y in rows.clone() {
                    let row = base + y * w;
                    for i in row + 2 * ox..row + (2 * ox + 2).min(w) {
                        let take = x[i] > best;
                        best = if take { x[i] } else { best };
                        route = if take { i } else { route };
                    }
                }
                let o = (plane * ho + oy) * wo + ox;
                dst[o] = best;
                routes[o] = route;
            }
        }
    }
    Ok((
        out,
        PoolCache {
            routes,
            input_shape: input.shape().to_vec(),
        },
    ))
}

pub fn relu_maxpool_backward<T: Scalar>(
    cache: &PoolCache,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if grad_out.len() != cache.routes.len() {
        return Err(Error::Shape(format!(
            "pool grad has {} values, forward produced {}",
            grad_out.len(),
            cache.routes.len()
        )));
    }
    let mut grad = Tensor::zeros(&cache.input_shape);
    for (&route, &g) in cache.routes.iter().zip(grad_out.data()) {
        if route != NO_ROUTE {
            grad.data_mut()[route] += g;
        }
    }
    Ok(grad)
}
