//! Quick built-in checks: finite-difference gradients of every network op
//! and a handful of exact identities of the radiometric path and file codecs.

use autonet::gradcheck::{standard_suite, DEFAULT_STEP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::hdrio::{decode_hdr, decode_pfm, encode_hdr, encode_pfm};
use crate::imgcore::Plane;
use crate::pipeline::compose_hdr;
use crate::radiance::{tentative_luminance, to_irradiance_plane};
use crate::sim::expose;

/// Largest relative finite-difference error accepted by the gradient checks.
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Measured error next to the limit it was compared with.
    pub detail: String,
}

fn check(name: impl Into<String>, value: f64, limit: f64) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: value <= limit,
        detail: format!("{value:.3e} <= {limit:.0e}"),
    }
}

fn random_scene(rng: &mut ChaCha8Rng, h: usize, w: usize, lo: f64, hi: f64) -> Plane {
    Plane::from_fn(h, w, 3, |_, _, _| rng.gen_range(lo..hi))
}

/// Worst excess of `|to_irradiance(expose(E)) - E|` over `0.5 / (255 ρ)`
/// on an unclipped scene; nonpositive means every pixel is within bound.
pub fn radiometric_excess(scales: &[f64]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let top = scales.iter().copied().fold(1.0, f64::max);
    let e = random_scene(&mut rng, 16, 16, 0.0, 1.0 / top);
    let mut worst = f64::NEG_INFINITY;
    for &rho in scales {
        let rec = to_irradiance_plane(&expose(&e, rho, 8), rho, 1.0).expect("positive scale");
        let bound = 0.5 / (255.0 * rho);
        for (a, b) in rec.data().iter().zip(e.data()) {
            worst = worst.max((a - b).abs() - bound);
        }
    }
    worst
}

pub fn run() -> Result<Vec<CheckResult>> {
    let mut out: Vec<CheckResult> = standard_suite(DEFAULT_STEP)?
        .into_iter()
        .map(|e| check(format!("grad.{}", e.name), e.report.max_rel_error, GRAD_TOLERANCE))
        .collect();

    out.push(check("radiometric.round_trip", radiometric_excess(&[1.0, 4.0, 16.0]).max(0.0), 0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let e = random_scene(&mut rng, 8, 8, 1e-4, 10.0);
    let lhat = tentative_luminance(&e);
    let g = Plane::from_fn(8, 8, 3, |y, x, c| e.get(y, x, c) / lhat.get(y, x, 0));
    let rec = compose_hdr(&lhat, &g);
    let err = rec
        .data()
        .iter()
        .zip(e.data())
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    out.push(check("ln.identity", err, 1e-12));

    let img = random_scene(&mut rng, 9, 40, 1e-3, 50.0);
    let back = decode_hdr(&encode_hdr(&img)?)?;
    let err = back
        .data()
        .chunks_exact(3)
        .zip(img.data().chunks_exact(3))
        .map(|(a, b)| {
            let m = b.iter().copied().fold(0.0, f64::max);
            a.iter().zip(b).map(|(p, q)| (p - q).abs() / m).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    out.push(check("rgbe.round_trip", err, 1.0 / 256.0));

    let img = random_scene(&mut rng, 5, 7, -3.0, 3.0).map(|v| v as f32 as f64);
    let back = decode_pfm(&encode_pfm(&img)?)?;
    out.push(check("pfm.bit_exact", if back == img { 0.0 } else { 1.0 }, 0.0));
    Ok(out)
}
