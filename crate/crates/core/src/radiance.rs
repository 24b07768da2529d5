//! Irradiance conversion, over/under-exposed sample correction, Debevec
//! fusion and tentative luminance.

use crate::error::{invalid, Error, Result};
use crate::imgcore::{interp_sparse, submosaic, Color, ExposureSpec, MosaicPattern, Plane, SparseStack, SITES};

/// `x / (ρ Δt)`
pub fn to_irradiance(x: f64, rho: f64, delta_t: f64) -> Result<f64> {
    check_exposure(rho, delta_t)?;
    Ok(x / (rho * delta_t))
}

pub fn to_irradiance_plane(x: &Plane, rho: f64, delta_t: f64) -> Result<Plane> {
    check_exposure(rho, delta_t)?;
    let s = rho * delta_t;
    Ok(x.map(|v| v / s))
}

fn check_exposure(rho: f64, delta_t: f64) -> Result<()> {
    if !(rho > 0.0 && delta_t > 0.0) {
        return Err(invalid(format!("non-positive exposure rho={rho} dt={delta_t}")));
    }
    Ok(())
}

/// `(τ_O, τ_U) = (0.995, 0.005) / (ρ Δt)`
pub fn ou_thresholds(rho: f64, delta_t: f64) -> (f64, f64) {
    let s = rho * delta_t;
    (0.995 / s, 0.005 / s)
}

/// What O/U correction did to a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFlag {
    InRange,
    /// Over-exposed, replaced from the next lower exposure.
    OverReplaced,
    /// Under-exposed, replaced from the next higher exposure.
    UnderReplaced,
    /// Over-exposed at the lowest exposure; clamped to its threshold.
    OverClamped,
    /// Under-exposed at the highest exposure; clamped to its threshold.
    UnderClamped,
}

/// Sparse irradiance in the 16-channel sub-mosaic layout.
#[derive(Debug, Clone, PartialEq)]
pub struct IrradianceStack {
    pub values: Plane,
    pub mask: Plane,
    pub pattern: MosaicPattern,
    /// One entry per exposure level.
    pub corrected: Vec<bool>,
    flags: Vec<SampleFlag>,
}

impl IrradianceStack {
    /// Converts a mosaic of LDR values into sparse irradiance.
    pub fn from_raw(raw: &Plane, pattern: &MosaicPattern, spec: &ExposureSpec) -> Result<Self> {
        spec.validate()?;
        if pattern.exposures() != spec.levels() {
            return Err(invalid(format!(
                "pattern has {} exposure levels, spec has {}",
                pattern.exposures(),
                spec.levels()
            )));
        }
        let SparseStack { mut planes, mask } = submosaic(raw, pattern)?;
        let scale: Vec<f64> = pattern
            .cells()
            .iter()
            .map(|s| 1.0 / (spec.rho[s.exposure] * spec.delta_t))
            .collect();
        for px in planes.data_mut().chunks_exact_mut(SITES) {
            for (v, s) in px.iter_mut().zip(&scale) {
                *v *= s;
            }
        }
        let n = raw.height() * raw.width();
        Ok(Self {
            values: planes,
            mask,
            pattern: pattern.clone(),
            corrected: vec![false; spec.levels()],
            flags: vec![SampleFlag::InRange; n],
        })
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    /// The sampled irradiance at pixel `(y, x)`.
    pub fn value(&self, y: usize, x: usize) -> f64 {
        self.values.get(y, x, MosaicPattern::channel_at(y, x))
    }

    pub fn flag(&self, y: usize, x: usize) -> SampleFlag {
        self.flags[y * self.width() + x]
    }

    pub fn sparse(&self) -> SparseStack {
        SparseStack {
            planes: self.values.clone(),
            mask: self.mask.clone(),
        }
    }

    /// Interpolation of the `(color, exposure)` class at every pixel: the
    /// mean of the per-channel interpolants of that class.
    pub fn class_interp(&self, color: Color, exposure: usize) -> Result<Plane> {
        class_interp(&self.values, &self.mask, &self.pattern, color, exposure)
    }
}

fn class_interp(values: &Plane, mask: &Plane, pattern: &MosaicPattern, color: Color, exposure: usize) -> Result<Plane> {
    let chans = pattern.class_channels(color, exposure);
    if chans.is_empty() {
        return Err(invalid(format!(
            "exposure level {exposure} has no {} samples",
            color.letter()
        )));
    }
    let mut acc = Plane::zeros(values.height(), values.width(), 1);
    for &c in &chans {
        let h = interp_sparse(&values.channel(c), &mask.channel(c))?;
        for (a, v) in acc.data_mut().iter_mut().zip(h.data()) {
            *a += v;
        }
    }
    let n = chans.len() as f64;
    Ok(acc.map(|v| v / n))
}

/// Mean of the dense channels of each `(color, exposure)` class, as one RGB
/// image per exposure level.
pub fn class_images(dense: &Plane, pattern: &MosaicPattern) -> Result<Vec<Plane>> {
    if dense.channels() != SITES {
        return Err(Error::Shape {
            op: "class_images",
            expected: format!("{SITES} channels"),
            got: format!("{}", dense.channels()),
        });
    }
    let (h, w, _) = dense.dims();
    let mut out = Vec::with_capacity(pattern.exposures());
    for e in 0..pattern.exposures() {
        let mut img = Plane::zeros(h, w, 3);
        for color in Color::ALL {
            let chans = pattern.class_channels(color, e);
            if chans.is_empty() {
                return Err(invalid(format!("exposure level {e} has no {} samples", color.letter())));
            }
            let n = chans.len() as f64;
            for y in 0..h {
                for x in 0..w {
                    let px = dense.pixel(y, x);
                    let v = chans.iter().map(|&c| px[c]).sum::<f64>() / n;
                    img.set(y, x, color.index(), v);
                }
            }
        }
        out.push(img);
    }
    Ok(out)
}

/// Replaces over- and under-exposed samples by the interpolated irradiance
/// of the adjacent exposure level.
///
/// Samples are classified once from the input values. Over-exposed samples
/// are corrected from the lowest level upward, each level borrowing from the
/// already-corrected level below; under-exposed samples from the highest
/// level downward. Levels whose `corrected` flag is set are left alone, which
/// makes the operation idempotent.
pub fn ou_correct(stack: &IrradianceStack, spec: &ExposureSpec) -> Result<IrradianceStack> {
    spec.validate()?;
    let levels = spec.levels();
    if stack.pattern.exposures() != levels || stack.corrected.len() != levels {
        return Err(invalid("stack and exposure spec disagree on the number of levels"));
    }
    let (h, w) = (stack.height(), stack.width());
    let thresholds: Vec<(f64, f64)> = spec.rho.iter().map(|&r| ou_thresholds(r, spec.delta_t)).collect();

    #[derive(Clone, Copy, PartialEq)]
    enum Class {
        Over,
        Under,
        In,
    }
    let mut class = vec![Class::In; h * w];
    for y in 0..h {
        for x in 0..w {
            let site = stack.pattern.site_at(y, x);
            let (t_o, t_u) = thresholds[site.exposure];
            let v = stack.value(y, x);
            class[y * w + x] = if v > t_o {
                Class::Over
            } else if v < t_u {
                Class::Under
            } else {
                Class::In
            };
        }
    }

    let mut out = stack.clone();
    let fix_level = |out: &mut IrradianceStack, e: usize, target: Class| -> Result<()> {
        let source = match target {
            Class::Over if e > 0 => Some(e - 1),
            Class::Under if e + 1 < levels => Some(e + 1),
            _ => None,
        };
        let mut interps: [Option<Plane>; 3] = [None, None, None];
        for y in 0..h {
            for x in 0..w {
                let site = out.pattern.site_at(y, x);
                if site.exposure != e || class[y * w + x] != target {
                    continue;
                }
                let c = MosaicPattern::channel_at(y, x);
                let (value, flag) = match (source, target) {
                    (Some(src), _) => {
                        let slot = &mut interps[site.color.index()];
                        if slot.is_none() {
                            *slot = Some(class_interp(&out.values, &out.mask, &out.pattern, site.color, src)?);
                        }
                        let v = slot.as_ref().expect("filled above").get(y, x, 0);
                        let flag = if target == Class::Over {
                            SampleFlag::OverReplaced
                        } else {
                            SampleFlag::UnderReplaced
                        };
                        (v, flag)
                    }
                    (None, Class::Over) => (thresholds[e].0, SampleFlag::OverClamped),
                    (None, _) => (thresholds[e].1, SampleFlag::UnderClamped),
                };
                out.values.set(y, x, c, value);
                out.flags[y * w + x] = flag;
            }
        }
        Ok(())
    };

    for e in 0..levels {
        if !stack.corrected[e] {
            fix_level(&mut out, e, Class::Over)?;
        }
    }
    for e in (0..levels).rev() {
        if !stack.corrected[e] {
            fix_level(&mut out, e, Class::Under)?;
        }
    }
    out.corrected.iter_mut().for_each(|c| *c = true);
    Ok(out)
}

/// Debevec weighting of LDR values.
#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub enum WeightFn {
    /// `min(z, 1 - z)`
    #[default]
    Hat,
    /// `min(z, 1 - z) / ramp`, saturating at 1.
    Trapezoid { ramp: f64 },
}


impl WeightFn {
    pub fn eval(&self, z: f64) -> f64 {
        let d = z.min(1.0 - z).max(0.0);
        match *self {
            WeightFn::Hat => d,
            WeightFn::Trapezoid { ramp } => (d / ramp).min(1.0),
        }
    }
}

/// Weighted fusion of the exposure stack into irradiance. Pixels where all
/// weights vanish take the estimate of the exposure nearest mid-gray.
pub fn debevec_merge(ldr: &[Plane], spec: &ExposureSpec, weight: WeightFn) -> Result<Plane> {
    spec.validate()?;
    if ldr.len() < 2 || ldr.len() != spec.levels() {
        return Err(invalid(format!(
            "merge needs one image per exposure level ({}), got {}",
            spec.levels(),
            ldr.len()
        )));
    }
    for img in &ldr[1..] {
        ldr[0].same_dims(img, "debevec_merge")?;
    }
    let scale: Vec<f64> = spec.rho.iter().map(|r| 1.0 / (r * spec.delta_t)).collect();
    let n = ldr[0].data().len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (mut num, mut den) = (0.0, 0.0);
        for (img, s) in ldr.iter().zip(&scale) {
            let z = img.data()[i];
            let wz = weight.eval(z);
            num += wz * z * s;
            den += wz;
        }
        if den > 0.0 {
            out.push(num / den);
        } else {
            let mut best = 0;
            for k in 1..ldr.len() {
                if (ldr[k].data()[i] - 0.5).abs() < (ldr[best].data()[i] - 0.5).abs() {
                    best = k;
                }
            }
            out.push(ldr[best].data()[i] * scale[best]);
        }
    }
    let (h, w, c) = ldr[0].dims();
    Plane::from_vec(h, w, c, out)
}

/// Pixelwise maximum over channels.
pub fn tentative_luminance(hdr: &Plane) -> Plane {
    let data = hdr
        .data()
        .chunks_exact(hdr.channels())
        .map(|px| px.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Plane::from_vec(hdr.height(), hdr.width(), 1, data).expect("one value per pixel")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::parse_pattern;

    #[test]
    fn irradiance_examples() {
        assert_eq!(to_irradiance(0.5, 4.0, 1.0).unwrap(), 0.125);
        assert_eq!(to_irradiance(1.0, 16.0, 1.0).unwrap(), 0.0625);
        assert_eq!(to_irradiance(0.37, 1.0, 1.0).unwrap(), 0.37);
        assert!(to_irradiance(1.0, 0.0, 1.0).is_err());
        assert!(to_irradiance(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(ou_thresholds(1.0, 1.0), (0.995, 0.005));
        assert_eq!(ou_thresholds(16.0, 1.0).0, 0.0621875);
        assert_eq!(ou_thresholds(4.0, 1.0).1, 0.00125);
    }

    fn stack_from(raw: &Plane) -> IrradianceStack {
        IrradianceStack::from_raw(raw, &MosaicPattern::default(), &ExposureSpec::default()).unwrap()
    }

    #[test]
    fn in_range_samples_untouched() {
        let raw = Plane::from_fn(8, 8, 1, |y, x, _| 0.2 + 0.01 * (y + x) as f64);
        let s = stack_from(&raw);
        let c = ou_correct(&s, &ExposureSpec::default()).unwrap();
        assert_eq!(c.values, s.values);
        assert!(c.corrected.iter().all(|&f| f));
    }

    #[test]
    fn saturated_site_takes_lower_level() {
        // irradiance 0.3 seen unclipped at ρ = 1, saturated at ρ = 4 and 16
        let p = MosaicPattern::default();
        let spec = ExposureSpec::default();
        let raw = Plane::from_fn(8, 8, 1, |y, x, _| if p.site_at(y, x).exposure == 0 { 0.3 } else { 1.0 });
        let c = ou_correct(&stack_from(&raw), &spec).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                if p.site_at(y, x).exposure == 0 {
                    assert_eq!(c.flag(y, x), SampleFlag::InRange);
                    assert_eq!(c.value(y, x), 0.3);
                } else {
                    assert_eq!(c.value(y, x), 0.3);
                    assert_eq!(c.flag(y, x), SampleFlag::OverReplaced);
                }
            }
        }
    }

    #[test]
    fn end_levels_are_clamped() {
        let spec = ExposureSpec::default();
        let c = ou_correct(&stack_from(&Plane::filled(8, 8, 1, 1.0)), &spec).unwrap();
        assert_eq!(c.value(0, 0), 0.995);
        assert_eq!(c.flag(0, 0), SampleFlag::OverClamped);
        // higher levels borrow the clamped lowest level
        assert_eq!(c.value(2, 2), 0.995);

        let c = ou_correct(&stack_from(&Plane::zeros(8, 8, 1)), &spec).unwrap();
        assert_eq!(c.value(2, 2), 0.005 / 16.0);
        assert_eq!(c.flag(2, 2), SampleFlag::UnderClamped);
        assert_eq!(c.value(0, 0), 0.005 / 16.0);
        assert_eq!(c.flag(0, 0), SampleFlag::UnderReplaced);
    }

    #[test]
    fn empty_class_is_an_error() {
        // exposure 1 carries no red
        let p = parse_pattern("G0 R0 G1 B1 B0 G0 B1 G1 G1 B1 G2 R2 B1 G1 B2 G2").unwrap();
        let raw = Plane::filled(8, 8, 1, 1.0);
        let s = IrradianceStack::from_raw(&raw, &p, &ExposureSpec::default()).unwrap();
        assert!(ou_correct(&s, &ExposureSpec::default()).is_err());
    }

    #[test]
    fn idempotent() {
        let raw = Plane::from_fn(12, 12, 1, |y, x, _| ((y * 7 + x * 3) % 11) as f64 / 10.0);
        let spec = ExposureSpec::default();
        let once = ou_correct(&stack_from(&raw), &spec).unwrap();
        assert_eq!(ou_correct(&once, &spec).unwrap(), once);
    }

    #[test]
    fn weight_functions() {
        assert_eq!(WeightFn::Hat.eval(0.0), 0.0);
        assert_eq!(WeightFn::Hat.eval(1.0), 0.0);
        assert_eq!(WeightFn::Hat.eval(0.5), 0.5);
        assert_eq!(WeightFn::Hat.eval(1.2), 0.0);
        let t = WeightFn::Trapezoid { ramp: 0.1 };
        assert_eq!(t.eval(0.5), 1.0);
        assert!((t.eval(0.05) - 0.5).abs() < 1e-12);
        assert_eq!(t.eval(1.0), 0.0);
    }

    #[test]
    fn merge_exact_on_unclipped_constant() {
        let spec = ExposureSpec::default();
        let e = 0.04;
        let ldr: Vec<Plane> = spec.rho.iter().map(|r| Plane::filled(2, 2, 3, e * r)).collect();
        let m = debevec_merge(&ldr, &spec, WeightFn::Hat).unwrap();
        assert!(m.data().iter().all(|v| (v - e).abs() < 1e-15));
    }

    #[test]
    fn merge_single_surviving_term() {
        let spec = ExposureSpec::default();
        let ldr = vec![Plane::filled(1, 1, 3, 0.2), Plane::filled(1, 1, 3, 1.0), Plane::filled(1, 1, 3, 1.0)];
        let m = debevec_merge(&ldr, &spec, WeightFn::Hat).unwrap();
        assert!((m.get(0, 0, 0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn merge_fallback_when_all_weights_vanish() {
        let spec = ExposureSpec::default();
        let ldr = vec![Plane::filled(1, 1, 3, 0.0), Plane::filled(1, 1, 3, 1.0), Plane::filled(1, 1, 3, 1.0)];
        // all equally far from 0.5: lowest index wins
        assert_eq!(debevec_merge(&ldr, &spec, WeightFn::Hat).unwrap().get(0, 0, 0), 0.0);
        let ldr = vec![Plane::filled(1, 1, 3, 1.0), Plane::filled(1, 1, 3, 1.0), Plane::filled(1, 1, 3, 1.0)];
        assert_eq!(debevec_merge(&ldr, &spec, WeightFn::Hat).unwrap().get(0, 0, 0), 1.0);
        assert!(debevec_merge(&ldr[..2], &spec, WeightFn::Hat).is_err());
    }

    #[test]
    fn luminance_examples() {
        let hdr = Plane::from_vec(1, 1, 3, vec![0.2, 0.5, 0.1]).unwrap();
        assert_eq!(tentative_luminance(&hdr).get(0, 0, 0), 0.5);
        let gray = Plane::filled(2, 3, 3, 0.7);
        assert_eq!(tentative_luminance(&gray), gray.channel(1));
    }

    #[test]
    fn class_images_average_duplicates() {
        let p = MosaicPattern::default();
        let dense = Plane::from_fn(4, 4, SITES, |_, _, c| c as f64);
        let imgs = class_images(&dense, &p).unwrap();
        // G at exposure 0 sits at channels 0 and 5
        assert_eq!(imgs[0].get(0, 0, 1), 2.5);
        assert_eq!(imgs[2].get(3, 3, 2), 14.0);
    }
}
