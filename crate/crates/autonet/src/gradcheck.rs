//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NetError, Result};
use crate::param::ParamId;
use crate::tensor::Tensor;
use crate::unet::SnapshotNet;

pub const DEFAULT_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `f` around `x`.
pub fn grad_check<F>(mut f: F, x: &[f64], analytic: &[f64], h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if x.len() != analytic.len() {
        return Err(NetError::ShapeMismatch {
            op: "grad_check",
            expected: vec![x.len()],
            got: vec![analytic.len()],
        });
    }
    let mut probe = x.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: 0,
    };
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        let numeric = (plus - minus) / (2.0 * h);
        if !numeric.is_finite() || !analytic[i].is_finite() {
            return Err(NetError::NonFinite("grad_check"));
        }
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = err;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    Ok(report)
}

/// Checks a tensor-to-tensor op through the scalar `<r, op(x)>` with a fixed
/// random projection `r`. `backward` maps an upstream gradient to the input
/// gradient.
pub fn check_op<F, B>(x: &Tensor, forward: F, backward: B, h: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> Result<Tensor>,
    B: Fn(&Tensor) -> Result<Tensor>,
{
    let y = forward(x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = Tensor::from_vec(y.shape(), (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let analytic = backward(&r)?;
    let shape = x.shape();
    let mut failure = None;
    let report = grad_check(
        |v| match Tensor::from_vec(shape, v.to_vec()).and_then(|t| forward(&t)) {
            Ok(out) => out.dot(&r),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        x.data(),
        analytic.data(),
        h,
    );
    match failure {
        Some(e) => Err(e),
        None => report,
    }
}

/// Checks every parameter of `net` for the scalar `loss(net(sparse, dense))`.
/// `loss` returns the value and its gradient w.r.t. the network output.
pub fn check_net<L>(net: &mut SnapshotNet, sparse: &Tensor, dense: &Tensor, loss: L, h: f64) -> Result<GradCheckReport>
where
    L: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    let (out, trace) = net.forward(sparse, dense)?;
    let (_, grad_out) = loss(&out)?;
    let analytic = net.backward(&trace, &grad_out)?.flat();

    let sizes: Vec<usize> = net.params().entries().iter().map(|p| p.data.len()).collect();
    let x: Vec<f64> = net.params().entries().iter().flat_map(|p| p.data.iter().copied()).collect();
    let mut failure = None;
    let report = grad_check(
        |v| {
            let mut offset = 0;
            for (id, &len) in sizes.iter().enumerate() {
                net.params_mut().get_mut(ParamId(id)).copy_from_slice(&v[offset..offset + len]);
                offset += len;
            }
            match net.infer(sparse, dense).and_then(|o| loss(&o)) {
                Ok((l, _)) => l,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &x,
        &analytic,
        h,
    );
    // restore the original weights
    let mut offset = 0;
    for (id, &len) in sizes.iter().enumerate() {
        net.params_mut().get_mut(ParamId(id)).copy_from_slice(&x[offset..offset + len]);
        offset += len;
    }
    match failure {
        Some(e) => Err(e),
        None => report,
    }
}

/// One named entry of [`standard_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub report: GradCheckReport,
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape matches length")
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect()
}

/// Checks every differentiable op (conv input/weight/bias, ReLU, max-pool,
/// nearest upsampling, transposed upsampling, concat, both losses) and a
/// depth-2 toy network end to end, all with step `h`.
pub fn standard_suite(h: f64) -> Result<Vec<SuiteEntry>> {
    use crate::conv::{conv2d_backward, conv2d_forward};
    use crate::loss::{loss_ldr, loss_ln};
    use crate::ops;
    use crate::unet::NetConfig;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut out = Vec::new();
    let mut push = |name, report| out.push(SuiteEntry { name, report });

    let x = random_tensor(&mut rng, [1, 2, 8, 8]);
    let w = random_vec(&mut rng, 3 * 2 * 9);
    let b = random_vec(&mut rng, 3);
    let r = random_tensor(&mut rng, [1, 3, 8, 8]);
    let g = conv2d_backward(&r, &x, &w, 3, true)?;
    push("conv.weight", grad_check(|v| conv2d_forward(&x, v, &b, 3, 3).map_or(f64::NAN, |o| o.dot(&r)), &w, &g.weight, h)?);
    push("conv.bias", grad_check(|v| conv2d_forward(&x, &w, v, 3, 3).map_or(f64::NAN, |o| o.dot(&r)), &b, &g.bias, h)?);
    push(
        "conv.input",
        check_op(&x, |t| conv2d_forward(t, &w, &b, 3, 3), |up| Ok(conv2d_backward(up, &x, &w, 3, true)?.input.expect("requested")), h, 1)?,
    );

    // keep ReLU inputs away from the kink so the step does not straddle it
    let x = random_tensor(&mut rng, [2, 2, 4, 4]).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let y = ops::relu_forward(&x);
    push("relu", check_op(&x, |t| Ok(ops::relu_forward(t)), |up| ops::relu_backward(up, &y), h, 2)?);

    let x = random_tensor(&mut rng, [2, 2, 6, 4]);
    let p = ops::maxpool2_forward(&x)?;
    push(
        "maxpool",
        check_op(&x, |t| Ok(ops::maxpool2_forward(t)?.output), |up| ops::maxpool2_backward(up, &p.argmax, x.shape()), h, 3)?,
    );

    let x = random_tensor(&mut rng, [2, 3, 3, 4]);
    push("upsample.nearest", check_op(&x, |t| Ok(ops::upsample2_forward(t)), ops::upsample2_backward, h, 4)?);
    let w = random_vec(&mut rng, 3 * 2 * 4);
    let b = random_vec(&mut rng, 2);
    let r = random_tensor(&mut rng, [2, 2, 6, 8]);
    let (gi, gw, gb) = ops::upconv2_backward(&r, &x, &w)?;
    let shape = x.shape();
    push(
        "upsample.transposed.input",
        grad_check(
            |v| {
                Tensor::from_vec(shape, v.to_vec())
                    .and_then(|t| ops::upconv2_forward(&t, &w, &b, 2))
                    .map_or(f64::NAN, |o| o.dot(&r))
            },
            x.data(),
            gi.data(),
            h,
        )?,
    );
    push("upsample.transposed.weight", grad_check(|v| ops::upconv2_forward(&x, v, &b, 2).map_or(f64::NAN, |o| o.dot(&r)), &w, &gw, h)?);
    push("upsample.transposed.bias", grad_check(|v| ops::upconv2_forward(&x, &w, v, 2).map_or(f64::NAN, |o| o.dot(&r)), &b, &gb, h)?);

    let a = random_tensor(&mut rng, [2, 2, 3, 3]);
    let c = random_tensor(&mut rng, [2, 3, 3, 3]);
    push("concat.first", check_op(&a, |t| ops::concat_forward(t, &c), |up| Ok(ops::concat_backward(up, 2)?.0), h, 5)?);
    push("concat.second", check_op(&c, |t| ops::concat_forward(&a, t), |up| Ok(ops::concat_backward(up, 2)?.1), h, 6)?);

    let p = random_tensor(&mut rng, [2, 9, 5, 6]);
    let t = random_tensor(&mut rng, [2, 9, 5, 6]);
    let (_, g) = loss_ldr(&p, &t, 1.0)?;
    let shape = p.shape();
    push(
        "loss.ldr",
        grad_check(
            |v| Tensor::from_vec(shape, v.to_vec()).and_then(|q| loss_ldr(&q, &t, 1.0)).map_or(f64::NAN, |l| l.0),
            p.data(),
            g.data(),
            h,
        )?,
    );
    let p = random_tensor(&mut rng, [1, 3, 4, 7]);
    let t = random_tensor(&mut rng, [1, 3, 4, 7]);
    let (_, g) = loss_ln(&p, &t, 0.7)?;
    let shape = p.shape();
    push(
        "loss.ln",
        grad_check(
            |v| Tensor::from_vec(shape, v.to_vec()).and_then(|q| loss_ln(&q, &t, 0.7)).map_or(f64::NAN, |l| l.0),
            p.data(),
            g.data(),
            h,
        )?,
    );

    let cfg = NetConfig::new(4, 4, 2, 2, 4, 3);
    let mut net = SnapshotNet::new(cfg, 22)?;
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for p in net.params_mut().entries_mut() {
        if p.name.ends_with(".bias") {
            p.data.iter_mut().for_each(|v| *v = rng.gen_range(0.05..0.2));
        }
    }
    let sparse = random_tensor(&mut rng, [1, 4, 8, 8]);
    let dense = random_tensor(&mut rng, [1, 4, 8, 8]);
    let target = random_tensor(&mut rng, [1, 3, 8, 8]);
    push("unet.depth2", check_net(&mut net, &sparse, &dense, |o| loss_ln(o, &target, 1.0), h)?);
    Ok(out)
}
