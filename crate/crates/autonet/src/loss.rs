//! Squared-error losses with an image-gradient term.
//!
//! For a single sample the loss is `||p - t||² + λ ||∇p - ∇t||²` where `∇`
//! stacks horizontal and vertical forward differences (last column / last
//! row set to zero). Over a batch the per-sample losses are averaged.

use crate::error::{NetError, Result};
use crate::tensor::Tensor;

/// Forward differences of every channel: `(dx, dy)`.
pub fn forward_diff(x: &Tensor) -> (Tensor, Tensor) {
    let [n, c, h, w] = x.shape();
    let mut dx = Tensor::zeros(n, c, h, w);
    let mut dy = Tensor::zeros(n, c, h, w);
    let src = x.data();
    let (gx, gy) = (dx.data_mut(), dy.data_mut());
    for plane in 0..n * c {
        let base = plane * h * w;
        for yy in 0..h {
            for xx in 0..w {
                let i = base + yy * w + xx;
                if xx + 1 < w {
                    gx[i] = src[i + 1] - src[i];
                }
                if yy + 1 < h {
                    gy[i] = src[i + w] - src[i];
                }
            }
        }
    }
    (dx, dy)
}

/// Adjoint of [`forward_diff`] applied to `(u, v)` and summed.
fn forward_diff_adjoint(u: &Tensor, v: &Tensor) -> Tensor {
    let [n, c, h, w] = u.shape();
    let mut out = Tensor::zeros(n, c, h, w);
    let (su, sv) = (u.data(), v.data());
    let dst = out.data_mut();
    for plane in 0..n * c {
        let base = plane * h * w;
        for yy in 0..h {
            for xx in 0..w {
                let i = base + yy * w + xx;
                let mut acc = 0.0;
                if xx + 1 < w {
                    acc -= su[i];
                }
                if xx > 0 {
                    acc += su[i - 1];
                }
                if yy + 1 < h {
                    acc -= sv[i];
                }
                if yy > 0 {
                    acc += sv[i - w];
                }
                dst[i] = acc;
            }
        }
    }
    out
}

/// Batch-averaged `||p - t||² + λ ||∇p - ∇t||²` and its gradient w.r.t. `pred`.
pub fn gradient_weighted_sq(pred: &Tensor, target: &Tensor, lambda: f64) -> Result<(f64, Tensor)> {
    pred.ensure_same_shape(target, "loss")?;
    if pred.n() == 0 {
        return Err(NetError::Config("loss over an empty batch".into()));
    }
    let scale = 1.0 / pred.n() as f64;
    let diff = pred.axpby(1.0, target, -1.0)?;
    let (dx, dy) = forward_diff(&diff);
    let data_term: f64 = diff.data().iter().map(|d| d * d).sum();
    let grad_term: f64 = dx.data().iter().chain(dy.data()).map(|d| d * d).sum();
    let loss = scale * (data_term + lambda * grad_term);

    let adj = forward_diff_adjoint(&dx, &dy);
    let grad = diff.axpby(2.0 * scale, &adj, 2.0 * lambda * scale)?;
    Ok((loss, grad))
}

/// LDR interpolation loss. `pred` and `target` stack the `K` exposures along
/// channels; the sum over exposures is the sum over all channels.
pub fn loss_ldr(pred: &Tensor, target: &Tensor, lambda: f64) -> Result<(f64, Tensor)> {
    gradient_weighted_sq(pred, target, lambda)
}

/// Luminance-normalized loss. `target_ln` must already be divided by the
/// tentative luminance.
pub fn loss_ln(pred: &Tensor, target_ln: &Tensor, lambda: f64) -> Result<(f64, Tensor)> {
    gradient_weighted_sq(pred, target_ln, lambda)
}
