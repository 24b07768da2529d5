//! Scaled-down end-to-end benchmark on procedural scenes: trains the
//! two-stage pipeline with the luminance-normalized loss and with a
//! linear-domain loss, and scores both against the interpolation + merge
//! baseline on held-out scenes.

use std::time::{Duration, Instant};

use crate::error::Result;
use crate::imgcore::Plane;
use crate::metrics::{cpsnr, gcpsnr, ln_mse, DEFAULT_MU};
use crate::pipeline::{baseline, reconstruct, train_ldr_i_net, train_ln_net, LossDomain, NetSettings, TrainConfig};
use crate::scenes::{scene_set, SceneSpec};
use crate::sim::{simulate_mecfa, SimConfig, Simulation};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub scenes: SceneSpec,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub net: NetSettings,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            scenes: SceneSpec::default(),
            train_scenes: 24,
            test_scenes: 8,
            sim: SimConfig::default(),
            train: TrainConfig::default(),
            net: NetSettings {
                depth: 5,
                base_channels: 4,
                adapt_width: 8,
                ..NetSettings::default()
            },
        }
    }
}

/// Mean held-out scores of one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub cpsnr: f64,
    pub gcpsnr: f64,
    pub lnmse: f64,
}

#[derive(Debug, Clone)]
pub struct ToyReport {
    pub baseline: Scores,
    pub ln: Scores,
    pub linear: Scores,
    pub ldr_losses: Vec<f64>,
    pub ln_losses: Vec<f64>,
    pub linear_losses: Vec<f64>,
    pub elapsed: Duration,
}

fn progress<'a>(name: &'static str, every: usize, log: &'a mut dyn FnMut(&str)) -> impl FnMut(usize, f64) + 'a {
    let t0 = Instant::now();
    move |it, l| {
        if (it + 1) % every == 0 {
            log(&format!("{name} iter {} loss {l:.6} ({:.0}s)", it + 1, t0.elapsed().as_secs_f64()));
        }
    }
}

fn score(preds: &[Plane], truths: &[Plane]) -> Result<Scores> {
    let n = preds.len() as f64;
    let (mut c, mut g, mut l) = (0.0, 0.0, 0.0);
    for (p, t) in preds.iter().zip(truths) {
        c += cpsnr(p, t)?;
        g += gcpsnr(p, t, DEFAULT_MU)?;
        l += ln_mse(p, t, crate::metrics::DEFAULT_EPSILON_L)?;
    }
    Ok(Scores {
        cpsnr: c / n,
        gcpsnr: g / n,
        lnmse: l / n,
    })
}

/// Average of the first and last `window` entries of a loss trace.
pub fn loss_endpoints(losses: &[f64], window: usize) -> (f64, f64) {
    let w = window.clamp(1, losses.len().max(1));
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
    (mean(&losses[..w.min(losses.len())]), mean(&losses[losses.len().saturating_sub(w)..]))
}

pub fn simulate_set(first_seed: u64, count: usize, cfg: &ToyConfig) -> Result<Vec<Simulation>> {
    scene_set(first_seed, count, &cfg.scenes)?
        .iter()
        .map(|s| simulate_mecfa(s, &cfg.sim))
        .collect()
}

/// `log` receives a line of progress text now and then.
pub fn run_toy_benchmark(cfg: &ToyConfig, log: &mut dyn FnMut(&str)) -> Result<ToyReport> {
    let start = Instant::now();
    let train = simulate_set(0, cfg.train_scenes, cfg)?;
    let test = simulate_set(10_000, cfg.test_scenes, cfg)?;
    let pattern = &cfg.sim.pattern;
    let spec = cfg.sim.exposure_spec();
    let every = (cfg.train.iterations / 10).max(1);

    let ldr = {
        let mut cb = progress("ldr", every, log);
        train_ldr_i_net(&train, pattern, &cfg.train, &cfg.net, Some(&mut cb))?
    };
    let ln = {
        let mut cb = progress("ln", every, log);
        train_ln_net(&train, &ldr.net, pattern, &spec, &cfg.train, &cfg.net, LossDomain::LuminanceNormalized, Some(&mut cb))?
    };
    let linear = {
        let mut cb = progress("linear", every, log);
        train_ln_net(&train, &ldr.net, pattern, &spec, &cfg.train, &cfg.net, LossDomain::Linear, Some(&mut cb))?
    };

    let truths: Vec<Plane> = test.iter().map(|s| s.hdr_norm.clone()).collect();
    let eps = cfg.train.epsilon_l;
    let mut preds_ln = Vec::new();
    let mut preds_lin = Vec::new();
    let mut preds_base = Vec::new();
    for s in &test {
        preds_ln.push(reconstruct(&s.raw, pattern, &spec, &ldr.net, &ln.net, eps)?.hdr);
        preds_lin.push(reconstruct(&s.raw, pattern, &spec, &ldr.net, &linear.net, eps)?.hdr);
        preds_base.push(baseline(&s.raw, pattern, &spec)?);
    }
    Ok(ToyReport {
        baseline: score(&preds_base, &truths)?,
        ln: score(&preds_ln, &truths)?,
        linear: score(&preds_lin, &truths)?,
        ldr_losses: ldr.losses,
        ln_losses: ln.losses,
        linear_losses: linear.losses,
        elapsed: start.elapsed(),
    })
}
