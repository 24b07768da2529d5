//! CPSNR, tone-mapped CPSNR, luminance-normalized MSE and error-pixel
//! ratio curves. All reductions use pairwise summation so results do not
//! depend on how the work is split.

use std::fmt::Write as _;

use crate::error::{invalid, Result};
use crate::imgcore::Plane;

/// Value shown in tables for identical images.
pub const CPSNR_CAP: f64 = 99.0;
pub const DEFAULT_MU: f64 = 5000.0;
pub const DEFAULT_EPSILON_L: f64 = 1e-6;

pub fn pairwise_sum(v: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if v.len() <= BLOCK {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

fn check_pair(pred: &Plane, truth: &Plane, op: &'static str) -> Result<()> {
    pred.same_dims(truth, op)?;
    if truth.data().is_empty() {
        return Err(invalid(format!("{op}: empty image")));
    }
    Ok(())
}

pub fn mse(pred: &Plane, truth: &Plane) -> Result<f64> {
    check_pair(pred, truth, "mse")?;
    let sq: Vec<f64> = pred.data().iter().zip(truth.data()).map(|(p, t)| (p - t) * (p - t)).collect();
    Ok(pairwise_sum(&sq) / sq.len() as f64)
}

/// `10 log10(peak² / MSE)` over all pixels and channels; `+∞` when equal.
pub fn cpsnr_with_peak(pred: &Plane, truth: &Plane, peak: f64) -> Result<f64> {
    let m = mse(pred, truth)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

pub fn cpsnr(pred: &Plane, truth: &Plane) -> Result<f64> {
    cpsnr_with_peak(pred, truth, 1.0)
}

/// Caps infinite PSNR values at [`CPSNR_CAP`] for display.
pub fn display_db(v: f64) -> f64 {
    v.min(CPSNR_CAP)
}

/// μ-law global tone map `log(1 + μx) / log(1 + μ)`.
pub fn gtonemap(x: &Plane, mu: f64) -> Plane {
    let denom = mu.ln_1p();
    x.map(|v| (mu * v).ln_1p() / denom)
}

pub fn gcpsnr(pred: &Plane, truth: &Plane, mu: f64) -> Result<f64> {
    check_pair(pred, truth, "gcpsnr")?;
    cpsnr(&gtonemap(pred, mu), &gtonemap(truth, mu))
}

/// Mean of `((pred - truth) / L)²` with `L` the per-pixel max over the true
/// channels, clamped below at `epsilon_l`.
pub fn ln_mse(pred: &Plane, truth: &Plane, epsilon_l: f64) -> Result<f64> {
    check_pair(pred, truth, "ln_mse")?;
    let c = truth.channels();
    let mut terms = Vec::with_capacity(truth.data().len());
    for (p, t) in pred.data().chunks_exact(c).zip(truth.data().chunks_exact(c)) {
        let l = t.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(epsilon_l);
        terms.extend(p.iter().zip(t).map(|(a, b)| ((a - b) / l).powi(2)));
    }
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}

/// Per-pixel mean squared error over channels.
fn pixel_errors(pred: &Plane, truth: &Plane) -> Vec<f64> {
    let c = pred.channels();
    pred.data()
        .chunks_exact(c)
        .zip(truth.data().chunks_exact(c))
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / c as f64)
        .collect()
}

/// Fraction of pixels whose mean squared RGB error exceeds each threshold.
pub fn error_pixel_ratio(pred: &Plane, truth: &Plane, thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_pair(pred, truth, "error_pixel_ratio")?;
    if thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("thresholds must be sorted ascending"));
    }
    let errs = pixel_errors(pred, truth);
    let n = errs.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| (t, errs.iter().filter(|&&e| e > t).count() as f64 / n))
        .collect())
}

/// Log-spaced thresholds from `lo` to `hi`, inclusive.
pub fn log_thresholds(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub cpsnr: f64,
    pub gcpsnr: f64,
    pub lnmse: f64,
    pub error_ratio_curve: Vec<(f64, f64)>,
}

impl EvalReport {
    pub fn compute(pred: &Plane, truth: &Plane, thresholds: &[f64]) -> Result<Self> {
        Ok(Self {
            cpsnr: cpsnr(pred, truth)?,
            gcpsnr: gcpsnr(pred, truth, DEFAULT_MU)?,
            lnmse: ln_mse(pred, truth, DEFAULT_EPSILON_L)?,
            error_ratio_curve: error_pixel_ratio(pred, truth, thresholds)?,
        })
    }

    pub fn to_csv(&self) -> String {
        format!(
            "metric,value\ncpsnr_db,{}\ngcpsnr_db,{}\nlnmse,{}\n",
            display_db(self.cpsnr),
            display_db(self.gcpsnr),
            self.lnmse
        )
    }

    pub fn curve_csv(&self) -> String {
        let mut s = String::from("threshold,ratio\n");
        for (t, r) in &self.error_ratio_curve {
            let _ = writeln!(s, "{t},{r}");
        }
        s
    }

    pub fn to_table(&self) -> String {
        format!(
            "{:<10} {:>10}\n{:<10} {:>10.4}\n{:<10} {:>10.4}\n{:<10} {:>10.6}\n",
            "metric",
            "value",
            "CPSNR",
            display_db(self.cpsnr),
            "G-CPSNR",
            display_db(self.gcpsnr),
            "LN-MSE",
            self.lnmse
        )
    }
}
