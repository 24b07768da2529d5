//! ME-CFA RAW simulation: normalize, scale, clip, quantize, sample.

use crate::error::{invalid, Result};
use crate::imgcore::{ExposureSpec, MosaicPattern, Plane, PERIOD};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub exposure_scales: Vec<f64>,
    pub bit_depth: u32,
    pub pattern: MosaicPattern,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            exposure_scales: vec![1.0, 4.0, 16.0],
            bit_depth: 8,
            pattern: MosaicPattern::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.exposure_spec().validate()?;
        if !(1..=16).contains(&self.bit_depth) {
            return Err(invalid(format!("bit depth {} outside 1..=16", self.bit_depth)));
        }
        if self.pattern.exposures() != self.exposure_scales.len() {
            return Err(invalid(format!(
                "pattern uses {} exposure levels but {} scales are configured",
                self.pattern.exposures(),
                self.exposure_scales.len()
            )));
        }
        Ok(())
    }

    /// The radiometric model uses the simulation scales as ρ_k with Δt = 1.
    pub fn exposure_spec(&self) -> ExposureSpec {
        ExposureSpec {
            rho: self.exposure_scales.clone(),
            delta_t: 1.0,
        }
    }
}

/// Divides by the global maximum over all pixels and channels.
pub fn normalize_hdr(hdr: &Plane) -> Result<Plane> {
    if !hdr.is_finite() || hdr.data().iter().any(|&v| v < 0.0) {
        return Err(invalid("HDR values must be finite and nonnegative"));
    }
    let max = hdr.max_value();
    if !(max > 0.0) {
        return Err(invalid("cannot normalize an all-zero image"));
    }
    Ok(hdr.map(|v| v / max))
}

/// Round-half-up quantization of a value in `[0, 1]` onto `2^bits` levels.
#[inline]
pub fn quantize(v: f64, bits: u32) -> f64 {
    let levels = ((1u32 << bits) - 1) as f64;
    (v * levels + 0.5).floor() / levels
}

/// `quantize(clip(scale · E, 0, 1))` elementwise.
pub fn expose(hdr_norm: &Plane, scale: f64, bit_depth: u32) -> Plane {
    hdr_norm.map(|e| quantize((scale * e).clamp(0.0, 1.0), bit_depth))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// Single-channel ME-CFA mosaic.
    pub raw: Plane,
    /// One RGB image per exposure level.
    pub ldr: Vec<Plane>,
    /// Normalized ground truth `E`.
    pub hdr_norm: Plane,
}

pub fn simulate_mecfa(hdr: &Plane, cfg: &SimConfig) -> Result<Simulation> {
    cfg.validate()?;
    let (h, w, c) = hdr.dims();
    if c != 3 {
        return Err(invalid(format!("expected an RGB image, got {c} channels")));
    }
    if h == 0 || w == 0 || h % PERIOD != 0 || w % PERIOD != 0 {
        return Err(invalid(format!("image {h}x{w} is not a multiple of the 4x4 tile")));
    }
    let hdr_norm = normalize_hdr(hdr)?;
    let ldr: Vec<Plane> = cfg
        .exposure_scales
        .iter()
        .map(|&s| expose(&hdr_norm, s, cfg.bit_depth))
        .collect();
    let raw = Plane::from_fn(h, w, 1, |y, x, _| {
        let site = cfg.pattern.site_at(y, x);
        ldr[site.exposure].get(y, x, site.color.index())
    });
    Ok(Simulation { raw, ldr, hdr_norm })
}
