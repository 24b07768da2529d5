//! Finite-difference checks of every differentiable op and of whole networks.

use autonet::conv::{conv2d_backward, conv2d_forward};
use autonet::gradcheck::{check_net, check_op, grad_check, DEFAULT_STEP};
use autonet::loss::{loss_ldr, loss_ln};
use autonet::ops;
use autonet::{NetConfig, SnapshotNet, Tensor, UpsampleMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
// Deeper or wider stacks have more ReLU kinks within reach of a 1e-4 step.
const SMALL_STEP: f64 = 1e-5;

fn random(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect()
}

#[test]
fn conv_all_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random(&mut rng, [1, 2, 8, 8]);
    let w = random_vec(&mut rng, 3 * 2 * 9);
    let b = random_vec(&mut rng, 3);
    let r = random(&mut rng, [1, 3, 8, 8]);
    let g = conv2d_backward(&r, &x, &w, 3, true).unwrap();

    let rep = grad_check(
        |wv| conv2d_forward(&x, wv, &b, 3, 3).unwrap().dot(&r),
        &w,
        &g.weight,
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(rep.max_rel_error < TOL, "weights {}", rep.max_rel_error);

    let rep = grad_check(
        |bv| conv2d_forward(&x, &w, bv, 3, 3).unwrap().dot(&r),
        &b,
        &g.bias,
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(rep.max_rel_error < TOL, "bias {}", rep.max_rel_error);

    let rep = check_op(
        &x,
        |t| conv2d_forward(t, &w, &b, 3, 3),
        |up| Ok(conv2d_backward(up, &x, &w, 3, true)?.input.unwrap()),
        DEFAULT_STEP,
        1,
    )
    .unwrap();
    assert!(rep.max_rel_error < TOL, "input {}", rep.max_rel_error);
}

#[test]
fn relu() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    // keep values away from the kink so h does not straddle it
    let x = random(&mut rng, [2, 2, 4, 4]).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let y = ops::relu_forward(&x);
    let rep = check_op(&x, |t| Ok(ops::relu_forward(t)), |up| ops::relu_backward(up, &y), DEFAULT_STEP, 2).unwrap();
    assert!(rep.max_rel_error < TOL);
}

#[test]
fn maxpool() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random(&mut rng, [2, 2, 6, 4]);
    let p = ops::maxpool2_forward(&x).unwrap();
    let rep = check_op(
        &x,
        |t| Ok(ops::maxpool2_forward(t)?.output),
        |up| ops::maxpool2_backward(up, &p.argmax, x.shape()),
        DEFAULT_STEP,
        3,
    )
    .unwrap();
    assert!(rep.max_rel_error < TOL);
}

#[test]
fn upsample_and_upconv() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = random(&mut rng, [2, 3, 3, 4]);
    let rep = check_op(&x, |t| Ok(ops::upsample2_forward(t)), ops::upsample2_backward, DEFAULT_STEP, 4).unwrap();
    assert!(rep.max_rel_error < TOL);

    let w = random_vec(&mut rng, 3 * 2 * 4);
    let b = random_vec(&mut rng, 2);
    let r = random(&mut rng, [2, 2, 6, 8]);
    let (gi, gw, gb) = ops::upconv2_backward(&r, &x, &w).unwrap();
    let rep = grad_check(|v| {
        let t = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
        ops::upconv2_forward(&t, &w, &b, 2).unwrap().dot(&r)
    }, x.data(), gi.data(), DEFAULT_STEP)
    .unwrap();
    assert!(rep.max_rel_error < TOL);
    let rep = grad_check(|v| ops::upconv2_forward(&x, v, &b, 2).unwrap().dot(&r), &w, &gw, DEFAULT_STEP).unwrap();
    assert!(rep.max_rel_error < TOL);
    let rep = grad_check(|v| ops::upconv2_forward(&x, &w, v, 2).unwrap().dot(&r), &b, &gb, DEFAULT_STEP).unwrap();
    assert!(rep.max_rel_error < TOL);
}

#[test]
fn concat() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let a = random(&mut rng, [2, 2, 3, 3]);
    let b = random(&mut rng, [2, 3, 3, 3]);
    let rep = check_op(
        &a,
        |t| ops::concat_forward(t, &b),
        |up| Ok(ops::concat_backward(up, 2)?.0),
        DEFAULT_STEP,
        5,
    )
    .unwrap();
    assert!(rep.max_rel_error < TOL);
    let rep = check_op(
        &b,
        |t| ops::concat_forward(&a, t),
        |up| Ok(ops::concat_backward(up, 2)?.1),
        DEFAULT_STEP,
        6,
    )
    .unwrap();
    assert!(rep.max_rel_error < TOL);
}

#[test]
fn losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let p = random(&mut rng, [2, 9, 5, 6]);
    let t = random(&mut rng, [2, 9, 5, 6]);
    let (_, g) = loss_ldr(&p, &t, 1.0).unwrap();
    let rep = grad_check(
        |v| loss_ldr(&Tensor::from_vec(p.shape(), v.to_vec()).unwrap(), &t, 1.0).unwrap().0,
        p.data(),
        g.data(),
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(rep.max_rel_error < TOL);

    let p = random(&mut rng, [1, 3, 4, 7]);
    let t = random(&mut rng, [1, 3, 4, 7]);
    let (_, g) = loss_ln(&p, &t, 0.7).unwrap();
    let rep = grad_check(
        |v| loss_ln(&Tensor::from_vec(p.shape(), v.to_vec()).unwrap(), &t, 0.7).unwrap().0,
        p.data(),
        g.data(),
        DEFAULT_STEP,
    )
    .unwrap();
    assert!(rep.max_rel_error < TOL);
}

fn randomize_biases(net: &mut SnapshotNet, rng: &mut ChaCha8Rng) {
    for p in net.params_mut().entries_mut() {
        if p.name.ends_with(".bias") {
            p.data.iter_mut().for_each(|v| *v = rng.gen_range(0.05..0.2));
        }
    }
}

fn tiny_net_check(cfg: NetConfig, seed: u64, h: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = SnapshotNet::new(cfg.clone(), seed).unwrap();
    randomize_biases(&mut net, &mut rng);
    let a = &cfg.adaptation;
    let sparse = random(&mut rng, [1, a.sparse_in, 8, 8]);
    let dense = random(&mut rng, [1, a.dense_in, 8, 8]);
    let target = random(&mut rng, [1, cfg.unet.out_channels, 8, 8]);
    check_net(&mut net, &sparse, &dense, |o| loss_ln(o, &target, 1.0), h)
        .unwrap()
        .max_rel_error
}

#[test]
fn adaptation_block() {
    // depth 1 isolates the adaptation blocks plus a small conv stack
    let err = tiny_net_check(NetConfig::new(4, 4, 3, 1, 3, 2), 21, SMALL_STEP);
    assert!(err < TOL, "{err}");
}

#[test]
fn tiny_unet_end_to_end() {
    let err = tiny_net_check(NetConfig::new(4, 4, 2, 2, 4, 3), 22, DEFAULT_STEP);
    assert!(err < TOL, "{err}");
}

#[test]
fn tiny_unet_transposed_upsampling() {
    let mut cfg = NetConfig::new(4, 4, 2, 2, 4, 3);
    cfg.unet.upsample = UpsampleMode::TransposedConv;
    let err = tiny_net_check(cfg, 23, SMALL_STEP);
    assert!(err < TOL, "{err}");
}

#[test]
fn three_level_unet() {
    let err = tiny_net_check(NetConfig::new(3, 3, 2, 3, 2, 2), 24, SMALL_STEP);
    assert!(err < TOL, "{err}");
    let mut cfg = NetConfig::new(3, 3, 2, 3, 2, 2);
    cfg.unet.upsample = UpsampleMode::TransposedConv;
    let err = tiny_net_check(cfg, 25, SMALL_STEP);
    assert!(err < TOL, "{err}");
}

#[test]
fn standard_suite_passes_at_default_step() {
    let suite = autonet::gradcheck::standard_suite(DEFAULT_STEP).unwrap();
    assert!(suite.len() >= 14);
    for e in &suite {
        assert!(e.report.max_rel_error < TOL, "{} {}", e.name, e.report.max_rel_error);
    }
}
