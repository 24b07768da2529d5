//! ReLU, 2×2 max pooling, nearest-neighbour ×2 upsampling, transposed ×2
//! upsampling and channel concatenation.

use rayon::prelude::*;

use crate::error::{NetError, Result};
use crate::tensor::Tensor;

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Gradient through ReLU given its *output*; the derivative at 0 is 0.
pub fn relu_backward(grad_out: &Tensor, output: &Tensor) -> Result<Tensor> {
    grad_out.ensure_same_shape(output, "relu_backward")?;
    let data = grad_out
        .data()
        .iter()
        .zip(output.data())
        .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
        .collect();
    Tensor::from_vec(grad_out.shape(), data)
}

/// Output of [`maxpool2_forward`]: pooled values and the flat input index of
/// each window's maximum.
#[derive(Debug, Clone)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// 2×2 max pooling with stride 2. Ties go to the first site in row-major order.
pub fn maxpool2_forward(x: &Tensor) -> Result<Pooled> {
    let [n, c, h, w] = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NetError::IndivisibleDims {
            op: "maxpool2",
            height: h,
            width: w,
            factor: 2,
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(n, c, oh, ow);
    let mut argmax = vec![0usize; out.len()];
    let src = x.data();
    for (o, (val, arg)) in out.data_mut().iter_mut().zip(argmax.iter_mut()).enumerate() {
        let ox = o % ow;
        let oy = (o / ow) % oh;
        let plane = o / (ow * oh);
        let base = plane * h * w;
        let mut best = base + 2 * oy * w + 2 * ox;
        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
            let i = base + (2 * oy + dy) * w + 2 * ox + dx;
            if src[i] > src[best] {
                best = i;
            }
        }
        *val = src[best];
        *arg = best;
    }
    Ok(Pooled {
        output: out,
        argmax,
    })
}

pub fn maxpool2_backward(grad_out: &Tensor, argmax: &[usize], input_shape: [usize; 4]) -> Result<Tensor> {
    if argmax.len() != grad_out.len() {
        return Err(NetError::ShapeMismatch {
            op: "maxpool2_backward",
            expected: vec![argmax.len()],
            got: vec![grad_out.len()],
        });
    }
    let mut gi = Tensor::zeros(input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    let dst = gi.data_mut();
    for (g, &i) in grad_out.data().iter().zip(argmax) {
        dst[i] += g;
    }
    Ok(gi)
}

/// Nearest-neighbour ×2 upsampling.
pub fn upsample2_forward(x: &Tensor) -> Tensor {
    let [n, c, h, w] = x.shape();
    let mut out = Tensor::zeros(n, c, 2 * h, 2 * w);
    let ow = 2 * w;
    let src = x.data();
    for (o, v) in out.data_mut().iter_mut().enumerate() {
        let ox = o % ow;
        let oy = (o / ow) % (2 * h);
        let plane = o / (ow * 2 * h);
        *v = src[plane * h * w + (oy / 2) * w + ox / 2];
    }
    out
}

/// Adjoint of [`upsample2_forward`]: sums each 2×2 block.
pub fn upsample2_backward(grad_out: &Tensor) -> Result<Tensor> {
    let [n, c, h2, w2] = grad_out.shape();
    if h2 % 2 != 0 || w2 % 2 != 0 {
        return Err(NetError::IndivisibleDims {
            op: "upsample2_backward",
            height: h2,
            width: w2,
            factor: 2,
        });
    }
    let (h, w) = (h2 / 2, w2 / 2);
    let mut gi = Tensor::zeros(n, c, h, w);
    let src = grad_out.data();
    for (i, v) in gi.data_mut().iter_mut().enumerate() {
        let x = i % w;
        let y = (i / w) % h;
        let plane = i / (w * h);
        let base = plane * h2 * w2 + 2 * y * w2 + 2 * x;
        *v = src[base] + src[base + 1] + src[base + w2] + src[base + w2 + 1];
    }
    Ok(gi)
}

/// 2×2 stride-2 transposed convolution. Weights are `[in_ch][out_ch][2][2]`.
pub fn upconv2_forward(x: &Tensor, weight: &[f64], bias: &[f64], out_ch: usize) -> Result<Tensor> {
    let [n, c, h, w] = x.shape();
    if weight.len() != c * out_ch * 4 || bias.len() != out_ch {
        return Err(NetError::ShapeMismatch {
            op: "upconv2",
            expected: vec![c, out_ch, 2, 2],
            got: vec![weight.len(), bias.len()],
        });
    }
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Tensor::zeros(n, out_ch, oh, ow);
    let out_len = out_ch * oh * ow;
    out.data_mut().par_chunks_mut(out_len).enumerate().for_each(|(s, o)| {
        let inp = x.sample(s);
        for co in 0..out_ch {
            let dst = &mut o[co * oh * ow..(co + 1) * oh * ow];
            dst.fill(bias[co]);
            for ci in 0..c {
                let src = &inp[ci * h * w..(ci + 1) * h * w];
                let wb = (ci * out_ch + co) * 4;
                for y in 0..h {
                    for xx in 0..w {
                        let v = src[y * w + xx];
                        let d = 2 * y * ow + 2 * xx;
                        dst[d] += weight[wb] * v;
                        dst[d + 1] += weight[wb + 1] * v;
                        dst[d + ow] += weight[wb + 2] * v;
                        dst[d + ow + 1] += weight[wb + 3] * v;
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Gradients of [`upconv2_forward`]: `(input, weight, bias)`.
pub fn upconv2_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weight: &[f64],
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let [n, c, h, w] = input.shape();
    let out_ch = grad_out.c();
    if grad_out.shape() != [n, out_ch, 2 * h, 2 * w] || weight.len() != c * out_ch * 4 {
        return Err(NetError::ShapeMismatch {
            op: "upconv2_backward",
            expected: vec![n, out_ch, 2 * h, 2 * w],
            got: grad_out.shape().to_vec(),
        });
    }
    let ow = 2 * w;
    let per_sample: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let inp = input.sample(s);
            let go = grad_out.sample(s);
            let mut gi = vec![0.0; c * h * w];
            let mut gw = vec![0.0; weight.len()];
            let mut gb = vec![0.0; out_ch];
            for co in 0..out_ch {
                let g = &go[co * 4 * h * w..(co + 1) * 4 * h * w];
                gb[co] = g.iter().sum();
                for ci in 0..c {
                    let wb = (ci * out_ch + co) * 4;
                    for y in 0..h {
                        for xx in 0..w {
                            let d = 2 * y * ow + 2 * xx;
                            let (g0, g1, g2, g3) = (g[d], g[d + 1], g[d + ow], g[d + ow + 1]);
                            let v = inp[ci * h * w + y * w + xx];
                            gi[ci * h * w + y * w + xx] +=
                                weight[wb] * g0 + weight[wb + 1] * g1 + weight[wb + 2] * g2 + weight[wb + 3] * g3;
                            gw[wb] += v * g0;
                            gw[wb + 1] += v * g1;
                            gw[wb + 2] += v * g2;
                            gw[wb + 3] += v * g3;
                        }
                    }
                }
            }
            (gi, gw, gb)
        })
        .collect();
    let mut gi = Vec::with_capacity(input.len());
    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; out_ch];
    for (i, w_, b_) in per_sample {
        gi.extend(i);
        gw.iter_mut().zip(&w_).for_each(|(a, b)| *a += b);
        gb.iter_mut().zip(&b_).for_each(|(a, b)| *a += b);
    }
    Ok((Tensor::from_vec(input.shape(), gi)?, gw, gb))
}

/// Channel concatenation `[a; b]`.
pub fn concat_forward(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [n, ca, h, w] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if n != nb || h != hb || w != wb {
        return Err(NetError::ShapeMismatch {
            op: "concat",
            expected: vec![n, ca, h, w],
            got: vec![nb, cb, hb, wb],
        });
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for s in 0..n {
        data.extend_from_slice(a.sample(s));
        data.extend_from_slice(b.sample(s));
    }
    Tensor::from_vec([n, ca + cb, h, w], data)
}

/// Splits a gradient of `[a; b]` back into the two parts.
pub fn concat_backward(grad_out: &Tensor, ca: usize) -> Result<(Tensor, Tensor)> {
    if ca > grad_out.c() {
        return Err(NetError::ShapeMismatch {
            op: "concat_backward",
            expected: vec![ca],
            got: grad_out.shape().to_vec(),
        });
    }
    Ok((grad_out.channels(0, ca), grad_out.channels(ca, grad_out.c() - ca)))
}
