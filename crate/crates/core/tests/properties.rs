use autonet::loss::loss_ln;
use autonet::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snaphdr::imgcore::{flatten, interp_sparse, submosaic, Augment, ExposureSpec, MosaicPattern, Plane};
use snaphdr::metrics::{cpsnr, error_pixel_ratio, log_thresholds};
use snaphdr::pipeline::{planes_to_tensor, sample_batch, tensor_to_plane, TrainImage};
use snaphdr::radiance::{debevec_merge, ou_correct, to_irradiance_plane, IrradianceStack, SampleFlag, WeightFn};
use snaphdr::sim::{expose, quantize, simulate_mecfa, SimConfig};

fn plane(h: usize, w: usize, c: usize, lo: f64, hi: f64) -> impl Strategy<Value = Plane> {
    prop::collection::vec(lo..hi, h * w * c).prop_map(move |d| Plane::from_vec(h, w, c, d).unwrap())
}

fn sized_plane(c: usize, lo: f64, hi: f64) -> impl Strategy<Value = Plane> {
    (1usize..4, 1usize..4).prop_flat_map(move |(a, b)| plane(4 * a, 4 * b, c, lo, hi))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flatten_inverts_submosaic(raw in sized_plane(1, 0.0, 1.0)) {
        let stack = submosaic(&raw, &MosaicPattern::default()).unwrap();
        prop_assert!(stack.is_consistent());
        prop_assert_eq!(flatten(&stack), raw);
    }

    #[test]
    fn interpolation_is_exact_at_samples(raw in sized_plane(1, 0.0, 1.0)) {
        let stack = submosaic(&raw, &MosaicPattern::default()).unwrap();
        let dense = interp_sparse(&stack.planes, &stack.mask).unwrap();
        for (i, m) in stack.mask.data().iter().enumerate() {
            if *m > 0.0 {
                prop_assert_eq!(dense.data()[i], stack.planes.data()[i]);
            }
        }
    }

    #[test]
    fn augmentations_form_a_group(img in plane(3, 5, 2, -1.0, 1.0)) {
        let all = Augment::all();
        let images: Vec<Plane> = all.iter().map(|a| a.apply(&img)).collect();
        for a in &all {
            // every element has an inverse in the set
            prop_assert!(all.iter().any(|b| b.apply(&a.apply(&img)) == img));
            // closure: composing two elements gives an element
            for b in &all {
                let ab = b.apply(&a.apply(&img));
                prop_assert!(images.contains(&ab));
            }
        }
    }

    #[test]
    fn expose_is_bounded_monotone_and_on_grid(
        a in plane(2, 3, 3, 0.0, 1.0),
        d in plane(2, 3, 3, 0.0, 0.5),
        scale in 0.5f64..32.0,
    ) {
        let b = Plane::from_vec(2, 3, 3, a.data().iter().zip(d.data()).map(|(x, y)| x + y).collect()).unwrap();
        let (ea, eb) = (expose(&a, scale, 8), expose(&b, scale, 8));
        for (x, y) in ea.data().iter().zip(eb.data()) {
            prop_assert!((0.0..=1.0).contains(x));
            prop_assert!(x <= y);
            prop_assert_eq!(quantize(*x, 8), *x);
        }
    }

    #[test]
    fn radiometric_round_trip_within_half_step(e in plane(3, 4, 3, 0.0, 1.0 / 16.0)) {
        for rho in [1.0, 4.0, 16.0] {
            let rec = to_irradiance_plane(&expose(&e, rho, 8), rho, 1.0).unwrap();
            for (a, b) in rec.data().iter().zip(e.data()) {
                prop_assert!((a - b).abs() <= 0.5 / (255.0 * rho) + 1e-15);
            }
        }
    }

    #[test]
    fn merge_within_weighted_quantization_bound(e in plane(3, 4, 3, 0.002, 1.0 / 16.0)) {
        let spec = ExposureSpec::default();
        let ldr: Vec<Plane> = spec.rho.iter().map(|&r| expose(&e, r, 8)).collect();
        let merged = debevec_merge(&ldr, &spec, WeightFn::Hat).unwrap();
        for i in 0..e.data().len() {
            let w: Vec<f64> = ldr.iter().map(|l| WeightFn::Hat.eval(l.data()[i])).collect();
            let sw: f64 = w.iter().sum();
            prop_assume!(sw > 0.0);
            let bound: f64 = w.iter().zip(&spec.rho).map(|(wk, r)| wk * 0.5 / (255.0 * r)).sum::<f64>() / sw;
            prop_assert!((merged.data()[i] - e.data()[i]).abs() <= bound * (1.0 + 1e-9) + 1e-15);
        }
    }

    #[test]
    fn ou_correction_is_idempotent_and_keeps_valid_samples(hdr in sized_plane(3, 1e-4, 1.0)) {
        let cfg = SimConfig::default();
        let sim = simulate_mecfa(&hdr, &cfg).unwrap();
        let spec = cfg.exposure_spec();
        let stack = IrradianceStack::from_raw(&sim.raw, &cfg.pattern, &spec).unwrap();
        let once = ou_correct(&stack, &spec).unwrap();
        let twice = ou_correct(&once, &spec).unwrap();
        prop_assert_eq!(&once.values, &twice.values);
        for y in 0..stack.height() {
            for x in 0..stack.width() {
                if once.flag(y, x) == SampleFlag::InRange {
                    prop_assert_eq!(once.value(y, x), stack.value(y, x));
                }
                prop_assert!(once.value(y, x).is_finite() && once.value(y, x) >= 0.0);
            }
        }
    }

    #[test]
    fn error_ratio_curve_is_nonincreasing(a in plane(4, 4, 3, 0.0, 1.0), b in plane(4, 4, 3, 0.0, 1.0)) {
        let curve = error_pixel_ratio(&a, &b, &log_thresholds(1e-6, 1.0, 25)).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn cpsnr_falls_as_error_grows(t in plane(3, 3, 3, 0.0, 1.0), k in 1.01f64..10.0) {
        let p1 = t.map(|v| v + 0.01);
        let p2 = t.map(|v| v + 0.01 * k);
        prop_assert!(cpsnr(&p2, &t).unwrap() < cpsnr(&p1, &t).unwrap());
    }

    #[test]
    fn ln_loss_data_term_is_luminance_normalized_mse(
        e in plane(4, 5, 3, 0.0, 10.0),
        g in plane(4, 5, 3, -1.0, 2.0),
        l in plane(4, 5, 1, 1e-3, 5.0),
    ) {
        let target = Plane::from_fn(4, 5, 3, |y, x, c| e.get(y, x, c) / l.get(y, x, 0));
        let (loss, _) = loss_ln(&planes_to_tensor(std::slice::from_ref(&g)).unwrap(), &planes_to_tensor(&[target]).unwrap(), 0.0).unwrap();
        let mut direct = 0.0;
        for y in 0..4 {
            for x in 0..5 {
                for c in 0..3 {
                    let ehat = l.get(y, x, 0) * g.get(y, x, c);
                    direct += ((ehat - e.get(y, x, c)) / l.get(y, x, 0)).powi(2);
                }
            }
        }
        prop_assert!((loss - direct).abs() <= 1e-12 * direct.max(1.0));
    }
}

/// Sampled patches of a coordinate-encoding image must be rigid transforms
/// of a contiguous crop, identical across inputs and target.
#[test]
fn sampler_applies_one_transform_to_every_plane() {
    let (h, w) = (20, 13);
    let code = Plane::from_fn(h, w, 1, |y, x, _| (y * 100 + x) as f64);
    let img = TrainImage {
        sparse: code.clone(),
        dense: code.clone(),
        target: Plane::concat(&[&code, &code]).unwrap(),
        scale: Some(code.clone()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b = sample_batch(&[img], 6, 64, true, &mut rng).unwrap();
    let mut seen = std::collections::HashSet::new();
    for n in 0..64 {
        let s = tensor_to_plane(&b.sparse, n);
        assert_eq!(s, tensor_to_plane(&b.dense, n));
        assert_eq!(s, tensor_to_plane(b.scale.as_ref().unwrap(), n));
        let t = tensor_to_plane(&b.target, n);
        assert_eq!(s, t.channel(0));
        assert_eq!(s, t.channel(1));
        let (y0, x0) = (s.data().iter().map(|v| *v as usize / 100).min().unwrap(), s.data().iter().map(|v| *v as usize % 100).min().unwrap());
        let crop = code.crop(y0, x0, 6, 6).unwrap();
        let a = Augment::all().into_iter().find(|a| a.apply(&crop) == s).expect("patch is a transformed crop");
        seen.insert((a.flip_h, a.flip_v, a.transpose));
    }
    assert_eq!(seen.len(), 8, "all eight transforms occur");
}

#[test]
fn tensor_layout_is_nchw() {
    let p = Plane::from_fn(2, 3, 2, |y, x, c| (c * 100 + y * 10 + x) as f64);
    let t = planes_to_tensor(&[p]).unwrap();
    let want: Vec<f64> = (0..2).flat_map(|c| (0..2).flat_map(move |y| (0..3).map(move |x| (c * 100 + y * 10 + x) as f64))).collect();
    assert_eq!(t.data(), Tensor::from_vec([1, 2, 2, 3], want).unwrap().data());
}
