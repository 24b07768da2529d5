//! Stride-1 "same" 2-D cross-correlation.
//!
//! Weights are laid out `[out_ch][in_ch][k][k]`. Dense inputs go through
//! im2col + GEMM; inputs that are mostly zeros (sub-mosaicked RAW stacks) use
//! a scatter formulation that only touches nonzero samples.

use rayon::prelude::*;

use crate::error::{NetError, Result};
use crate::tensor::Tensor;

/// Inputs with a smaller fraction of nonzeros use the scatter path.
const SPARSE_DENSITY: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct ConvGrads {
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Tensor>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    in_ch: usize,
    out_ch: usize,
    k: usize,
    h: usize,
    w: usize,
}

impl Geometry {
    #[inline]
    fn pad(&self) -> usize {
        self.k / 2
    }
    #[inline]
    fn col_rows(&self) -> usize {
        self.in_ch * self.k * self.k
    }
    #[inline]
    fn plane(&self) -> usize {
        self.h * self.w
    }
}

fn check_shapes(
    x: &Tensor,
    weight: &[f64],
    bias: &[f64],
    out_ch: usize,
    kernel: usize,
) -> Result<Geometry> {
    if kernel.is_multiple_of(2) {
        return Err(NetError::Config(format!("kernel size {kernel} must be odd")));
    }
    let g = Geometry {
        in_ch: x.c(),
        out_ch,
        k: kernel,
        h: x.h(),
        w: x.w(),
    };
    let expected = out_ch * g.col_rows();
    if weight.len() != expected {
        return Err(NetError::ShapeMismatch {
            op: "conv2d weight",
            expected: vec![out_ch, g.in_ch, kernel, kernel],
            got: vec![weight.len()],
        });
    }
    if bias.len() != out_ch {
        return Err(NetError::ShapeMismatch {
            op: "conv2d bias",
            expected: vec![out_ch],
            got: vec![bias.len()],
        });
    }
    Ok(g)
}

fn is_sparse(sample: &[f64], k: usize) -> bool {
    if k == 1 || sample.is_empty() {
        return false;
    }
    let nnz = sample.iter().filter(|v| **v != 0.0).count();
    (nnz as f64) < SPARSE_DENSITY * sample.len() as f64
}

fn im2col(g: &Geometry, input: &[f64], cols: &mut [f64]) {
    let (h, w, k, pad) = (g.h, g.w, g.k, g.pad());
    let plane = g.plane();
    for ci in 0..g.in_ch {
        let src = &input[ci * plane..(ci + 1) * plane];
        for kh in 0..k {
            for kw in 0..k {
                let row = (ci * k + kh) * k + kw;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                // valid x range: 0 <= x + kw - pad < w
                let x0 = pad.saturating_sub(kw);
                let x1 = (w + pad).saturating_sub(kw).min(w);
                for y in 0..h {
                    let drow = &mut dst[y * w..(y + 1) * w];
                    let sy = y as isize + kh as isize - pad as isize;
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        drow.fill(0.0);
                        continue;
                    }
                    let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                    drow[..x0].fill(0.0);
                    drow[x1..].fill(0.0);
                    let sx0 = x0 + kw - pad;
                    drow[x0..x1].copy_from_slice(&srow[sx0..sx0 + (x1 - x0)]);
                }
            }
        }
    }
}

fn col2im_add(g: &Geometry, cols: &[f64], grad_in: &mut [f64]) {
    let (h, w, k, pad) = (g.h, g.w, g.k, g.pad());
    let plane = g.plane();
    for ci in 0..g.in_ch {
        let dst = &mut grad_in[ci * plane..(ci + 1) * plane];
        for kh in 0..k {
            for kw in 0..k {
                let row = (ci * k + kh) * k + kw;
                let src = &cols[row * plane..(row + 1) * plane];
                let x0 = pad.saturating_sub(kw);
                let x1 = (w + pad).saturating_sub(kw).min(w);
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + kh as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sx0 = x0 + kw - pad;
                    let drow = &mut dst[sy as usize * w + sx0..sy as usize * w + sx0 + (x1 - x0)];
                    let srow = &src[y * w + x0..y * w + x1];
                    for (d, s) in drow.iter_mut().zip(srow) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

/// `c[m×n] += a[m×k] · b[k×n]` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: callers pass slices whose extents cover the strided ranges.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn forward_sample(g: &Geometry, input: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let plane = g.plane();
    for (co, b) in bias.iter().enumerate() {
        out[co * plane..(co + 1) * plane].fill(*b);
    }
    if is_sparse(input, g.k) {
        let (h, w, k, pad) = (g.h as isize, g.w as isize, g.k, g.pad() as isize);
        for ci in 0..g.in_ch {
            for y in 0..h {
                for x in 0..w {
                    let v = input[ci * plane + (y * w + x) as usize];
                    if v == 0.0 {
                        continue;
                    }
                    for co in 0..g.out_ch {
                        let wbase = (co * g.in_ch + ci) * k * k;
                        let obase = co * plane;
                        for kh in 0..k {
                            let oy = y - kh as isize + pad;
                            if oy < 0 || oy >= h {
                                continue;
                            }
                            for kw in 0..k {
                                let ox = x - kw as isize + pad;
                                if ox < 0 || ox >= w {
                                    continue;
                                }
                                out[obase + (oy * w + ox) as usize] += weight[wbase + kh * k + kw] * v;
                            }
                        }
                    }
                }
            }
        }
        return;
    }
    let kk = g.col_rows();
    if g.k == 1 {
        gemm(g.out_ch, kk, plane, weight, kk as isize, 1, input, plane as isize, 1, out);
    } else {
        let mut cols = vec![0.0; kk * plane];
        im2col(g, input, &mut cols);
        gemm(g.out_ch, kk, plane, weight, kk as isize, 1, &cols, plane as isize, 1, out);
    }
}

/// Same-padded stride-1 convolution of a batch.
pub fn conv2d_forward(
    x: &Tensor,
    weight: &[f64],
    bias: &[f64],
    out_ch: usize,
    kernel: usize,
) -> Result<Tensor> {
    let g = check_shapes(x, weight, bias, out_ch, kernel)?;
    let mut out = Tensor::zeros(x.n(), out_ch, g.h, g.w);
    let out_len = out_ch * g.plane();
    if out_len == 0 {
        return Ok(out);
    }
    out.data_mut()
        .par_chunks_mut(out_len)
        .enumerate()
        .for_each(|(n, o)| forward_sample(&g, x.sample(n), weight, bias, o));
    Ok(out)
}

struct SampleGrads {
    weight: Vec<f64>,
    bias: Vec<f64>,
    input: Option<Vec<f64>>,
}

fn backward_sample(
    g: &Geometry,
    grad_out: &[f64],
    input: &[f64],
    weight: &[f64],
    need_input_grad: bool,
) -> SampleGrads {
    let plane = g.plane();
    let kk = g.col_rows();
    let bias: Vec<f64> = (0..g.out_ch)
        .map(|co| grad_out[co * plane..(co + 1) * plane].iter().sum())
        .collect();
    let mut gw = vec![0.0; g.out_ch * kk];

    if is_sparse(input, g.k) {
        let (h, w, k, pad) = (g.h as isize, g.w as isize, g.k, g.pad() as isize);
        for ci in 0..g.in_ch {
            for y in 0..h {
                for x in 0..w {
                    let v = input[ci * plane + (y * w + x) as usize];
                    if v == 0.0 {
                        continue;
                    }
                    for co in 0..g.out_ch {
                        let wbase = (co * g.in_ch + ci) * k * k;
                        let obase = co * plane;
                        for kh in 0..k {
                            let oy = y - kh as isize + pad;
                            if oy < 0 || oy >= h {
                                continue;
                            }
                            for kw in 0..k {
                                let ox = x - kw as isize + pad;
                                if ox < 0 || ox >= w {
                                    continue;
                                }
                                gw[wbase + kh * k + kw] += grad_out[obase + (oy * w + ox) as usize] * v;
                            }
                        }
                    }
                }
            }
        }
    } else if g.k == 1 {
        gemm(g.out_ch, plane, kk, grad_out, plane as isize, 1, input, 1, plane as isize, &mut gw);
    } else {
        let mut cols = vec![0.0; kk * plane];
        im2col(g, input, &mut cols);
        gemm(g.out_ch, plane, kk, grad_out, plane as isize, 1, &cols, 1, plane as isize, &mut gw);
    }

    let input_grad = need_input_grad.then(|| {
        let mut gi = vec![0.0; g.in_ch * plane];
        if g.k == 1 {
            gemm(kk, g.out_ch, plane, weight, 1, kk as isize, grad_out, plane as isize, 1, &mut gi);
        } else {
            let mut gcols = vec![0.0; kk * plane];
            gemm(kk, g.out_ch, plane, weight, 1, kk as isize, grad_out, plane as isize, 1, &mut gcols);
            col2im_add(g, &gcols, &mut gi);
        }
        gi
    });

    SampleGrads {
        weight: gw,
        bias,
        input: input_grad,
    }
}

/// Exact adjoint of [`conv2d_forward`].
///
/// Weight and bias gradients are summed over the batch in batch order.
pub fn conv2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weight: &[f64],
    kernel: usize,
    need_input_grad: bool,
) -> Result<ConvGrads> {
    let out_ch = grad_out.c();
    if grad_out.n() != input.n() || grad_out.h() != input.h() || grad_out.w() != input.w() {
        return Err(NetError::ShapeMismatch {
            op: "conv2d_backward",
            expected: vec![input.n(), out_ch, input.h(), input.w()],
            got: grad_out.shape().to_vec(),
        });
    }
    let zero_bias = vec![0.0; out_ch];
    let g = check_shapes(input, weight, &zero_bias, out_ch, kernel)?;

    let per_sample: Vec<SampleGrads> = (0..input.n())
        .into_par_iter()
        .map(|n| backward_sample(&g, grad_out.sample(n), input.sample(n), weight, need_input_grad))
        .collect();

    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; out_ch];
    for s in &per_sample {
        gw.iter_mut().zip(&s.weight).for_each(|(a, b)| *a += b);
        gb.iter_mut().zip(&s.bias).for_each(|(a, b)| *a += b);
    }
    let gin = if need_input_grad {
        let mut data = Vec::with_capacity(input.len());
        for s in per_sample {
            data.extend(s.input.expect("input grad requested"));
        }
        Some(Tensor::from_vec(input.shape(), data)?)
    } else {
        None
    };
    Ok(ConvGrads {
        input: gin,
        weight: gw,
        bias: gb,
    })
}
