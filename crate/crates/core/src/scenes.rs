//! Procedural HDR scenes: textured reflectance under smoothly varying or
//! stepped illumination, plus small emitters. Each scene is a pure function
//! of its seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::imgcore::Plane;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Illumination {
    /// Exponential ramp along a random direction.
    Gradient,
    /// A bright window on a dim background with a soft edge.
    Step,
    /// A single falloff around a point light.
    Spot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub size: usize,
    /// Ratio between the brightest and the dimmest illumination, in decades.
    pub decades: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self { size: 64, decades: 3.5 }
    }
}

struct Wave {
    fy: f64,
    fx: f64,
    phase: f64,
    amp: f64,
}

struct Disk {
    cy: f64,
    cx: f64,
    r: f64,
    color: [f64; 3],
    gain: f64,
}

struct Rect {
    y0: f64,
    x0: f64,
    y1: f64,
    x1: f64,
    color: [f64; 3],
}

fn rand_color(rng: &mut ChaCha8Rng, lo: f64) -> [f64; 3] {
    [rng.gen_range(lo..1.0), rng.gen_range(lo..1.0), rng.gen_range(lo..1.0)]
}

/// Generates one scene. The result is strictly positive.
pub fn scene(seed: u64, spec: &SceneSpec) -> Result<Plane> {
    if spec.size < 4 || !spec.size.is_multiple_of(4) {
        return Err(invalid("scene size must be a positive multiple of 4"));
    }
    if !(spec.decades > 0.0) {
        return Err(invalid("decades must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.size as f64;
    let illum = match rng.gen_range(0..3) {
        0 => Illumination::Gradient,
        1 => Illumination::Step,
        _ => Illumination::Spot,
    };
    let span = spec.decades * rng.gen_range(0.85..1.0);
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dy, dx) = (theta.sin(), theta.cos());
    let (wy0, wx0) = (rng.gen_range(0.0..0.5) * n, rng.gen_range(0.0..0.5) * n);
    let (wy1, wx1) = (wy0 + rng.gen_range(0.3..0.5) * n, wx0 + rng.gen_range(0.3..0.5) * n);
    let (sy, sx) = (rng.gen_range(0.0..n), rng.gen_range(0.0..n));

    let waves: Vec<Wave> = (0..rng.gen_range(2..5))
        .map(|_| Wave {
            fy: rng.gen_range(-0.6..0.6),
            fx: rng.gen_range(-0.6..0.6),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
            amp: rng.gen_range(0.1..0.3),
        })
        .collect();
    let base = rand_color(&mut rng, 0.3);
    let rects: Vec<Rect> = (0..rng.gen_range(2..6))
        .map(|_| {
            let (y0, x0) = (rng.gen_range(0.0..n), rng.gen_range(0.0..n));
            Rect {
                y0,
                x0,
                y1: y0 + rng.gen_range(4.0..n / 2.0),
                x1: x0 + rng.gen_range(4.0..n / 2.0),
                color: rand_color(&mut rng, 0.05),
            }
        })
        .collect();
    let disks: Vec<Disk> = (0..rng.gen_range(1..4))
        .map(|_| Disk {
            cy: rng.gen_range(0.0..n),
            cx: rng.gen_range(0.0..n),
            r: rng.gen_range(1.5..5.0),
            color: rand_color(&mut rng, 0.6),
            gain: 10f64.powf(rng.gen_range(0.3..1.0)),
        })
        .collect();

    let lighting = |y: f64, x: f64| -> f64 {
        let t = match illum {
            Illumination::Gradient => {
                let p = ((y - n / 2.0) * dy + (x - n / 2.0) * dx) / (n * std::f64::consts::FRAC_1_SQRT_2);
                (p + 1.0) / 2.0
            }
            Illumination::Step => {
                let soft = |v: f64, a: f64, b: f64| {
                    let s = |u: f64| 1.0 / (1.0 + (-u / 1.5).exp());
                    s(v - a) * s(b - v)
                };
                soft(y, wy0, wy1) * soft(x, wx0, wx1)
            }
            Illumination::Spot => {
                let d = ((y - sy).powi(2) + (x - sx).powi(2)).sqrt() / (n * std::f64::consts::SQRT_2);
                1.0 - d
            }
        };
        10f64.powf(span * (t.clamp(0.0, 1.0) - 1.0))
    };

    Ok(Plane::from_fn(spec.size, spec.size, 3, |yi, xi, c| {
        let (y, x) = (yi as f64 + 0.5, xi as f64 + 0.5);
        let tex: f64 = waves.iter().map(|w| w.amp * (w.fy * y + w.fx * x + w.phase).sin()).sum();
        let mut refl = base[c] * (1.0 + tex).clamp(0.1, 2.0);
        for r in &rects {
            if y >= r.y0 && y < r.y1 && x >= r.x0 && x < r.x1 {
                refl = r.color[c];
            }
        }
        let mut v = refl.clamp(0.02, 1.0) * lighting(y, x);
        for d in &disks {
            let dd = ((y - d.cy).powi(2) + (x - d.cx).powi(2)).sqrt();
            if dd < d.r {
                v = v.max(d.gain * d.color[c] * (1.0 - 0.5 * dd / d.r));
            }
        }
        v
    }))
}

/// Scenes `first_seed .. first_seed + count`.
pub fn scene_set(first_seed: u64, count: usize, spec: &SceneSpec) -> Result<Vec<Plane>> {
    (0..count as u64).map(|i| scene(first_seed + i, spec)).collect()
}

/// Decades between the largest value and the 1st-percentile value.
pub fn dynamic_range_decades(img: &Plane) -> f64 {
    let mut v: Vec<f64> = img.data().iter().copied().filter(|&x| x > 0.0).collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let lo = v[v.len() / 100];
    (v[v.len() - 1] / lo).log10()
}
