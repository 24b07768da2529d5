//! The two-stage reconstruction: an LDR interpolation network whose merged
//! output gives a tentative luminance, and a second network that predicts
//! the HDR image divided by that luminance.

use std::fmt::Write as _;

use autonet::loss::{loss_ldr, loss_ln};
use autonet::{AdamState, NetConfig, NetError, SnapshotNet, Tensor, UpsampleMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::metrics::DEFAULT_EPSILON_L;
use crate::imgcore::{interp_sparse, submosaic, Augment, ExposureSpec, MosaicPattern, Plane, SITES};
use crate::radiance::{class_images, debevec_merge, ou_correct, tentative_luminance, IrradianceStack, WeightFn};
use crate::sim::Simulation;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub patch_size: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub augment: bool,
    pub epsilon_l: f64,
    /// Weight of the image-gradient term in both losses.
    pub lambda: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            patch_size: 32,
            batch_size: 32,
            iterations: 3000,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            augment: true,
            epsilon_l: DEFAULT_EPSILON_L,
            lambda: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.batch_size == 0 || self.iterations == 0 {
            return Err(invalid("patch size, batch size and iterations must be positive"));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("lr must be positive and betas in [0, 1)"));
        }
        if !(self.epsilon_l > 0.0) || !(self.lambda >= 0.0) {
            return Err(invalid("epsilon_l must be positive and lambda nonnegative"));
        }
        Ok(())
    }

    pub fn echo(&self) -> String {
        format!(
            "train.patch_size={}\ntrain.batch_size={}\ntrain.iterations={}\ntrain.lr={}\ntrain.beta1={}\n\
             train.beta2={}\ntrain.seed={}\ntrain.augment={}\ntrain.epsilon_l={}\ntrain.lambda={}\n",
            self.patch_size,
            self.batch_size,
            self.iterations,
            self.lr,
            self.beta1,
            self.beta2,
            self.seed,
            self.augment,
            self.epsilon_l,
            self.lambda
        )
    }
}

/// Architecture knobs shared by both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSettings {
    pub depth: usize,
    pub base_channels: usize,
    /// Output width of each adaptation branch.
    pub adapt_width: usize,
    pub upsample: UpsampleMode,
}

impl Default for NetSettings {
    fn default() -> Self {
        Self {
            depth: 5,
            base_channels: 32,
            adapt_width: 16,
            upsample: UpsampleMode::Nearest,
        }
    }
}

impl NetSettings {
    pub fn validate(&self) -> Result<()> {
        self.net_config(SITES, SITES, 3).validate()?;
        Ok(())
    }

    pub fn net_config(&self, sparse_in: usize, dense_in: usize, out: usize) -> NetConfig {
        let mut cfg = NetConfig::new(sparse_in, dense_in, self.adapt_width, self.depth, self.base_channels, out);
        cfg.unet.upsample = self.upsample;
        cfg
    }
}

/// Which quantity the second-stage loss compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossDomain {
    /// `g` against `E / L̂`.
    LuminanceNormalized,
    /// `L̂ ⊙ g` against `E`.
    Linear,
}

impl LossDomain {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossDomain::LuminanceNormalized => "ln",
            LossDomain::Linear => "linear",
        }
    }
}

// ------------------------------------------------------------ inputs

/// Sub-mosaicked RAW `x` and its per-channel interpolation `h(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LdrInput {
    pub sparse: Plane,
    pub dense: Plane,
}

pub fn ldr_input(raw: &Plane, pattern: &MosaicPattern) -> Result<LdrInput> {
    let stack = submosaic(raw, pattern)?;
    let dense = interp_sparse(&stack.planes, &stack.mask)?;
    Ok(LdrInput {
        sparse: stack.planes,
        dense,
    })
}

/// The exposure stack as one `3K`-channel image.
pub fn ldr_target(ldr: &[Plane]) -> Result<Plane> {
    let refs: Vec<&Plane> = ldr.iter().collect();
    Plane::concat(&refs)
}

/// The four parts of the second-stage input. Only the irradiance parts are
/// divided by the luminance.
#[derive(Debug, Clone, PartialEq)]
pub struct LnInput {
    pub x: Plane,
    pub hx: Plane,
    pub xi_norm: Plane,
    pub hxi_norm: Plane,
}

impl LnInput {
    pub fn sparse(&self) -> Plane {
        Plane::concat(&[&self.x, &self.xi_norm]).expect("aligned parts")
    }

    pub fn dense(&self) -> Plane {
        Plane::concat(&[&self.hx, &self.hxi_norm]).expect("aligned parts")
    }
}

fn divide_by(p: &Plane, lum: &Plane) -> Plane {
    let c = p.channels();
    let mut out = p.clone();
    for (px, l) in out.data_mut().chunks_exact_mut(c).zip(lum.data()) {
        px.iter_mut().for_each(|v| *v /= l);
    }
    out
}

fn multiply_by(p: &Plane, lum: &Plane) -> Plane {
    let c = p.channels();
    let mut out = p.clone();
    for (px, l) in out.data_mut().chunks_exact_mut(c).zip(lum.data()) {
        px.iter_mut().for_each(|v| *v *= l);
    }
    out
}

/// Corrected sparse irradiance `ξ̂` and its interpolation `h(ξ̂)`.
pub fn corrected_irradiance(raw: &Plane, pattern: &MosaicPattern, spec: &ExposureSpec) -> Result<(Plane, Plane)> {
    let stack = ou_correct(&IrradianceStack::from_raw(raw, pattern, spec)?, spec)?;
    let dense = interp_sparse(&stack.values, &stack.mask)?;
    Ok((stack.values, dense))
}

pub fn build_ln_input(raw: &Plane, pattern: &MosaicPattern, spec: &ExposureSpec, lhat: &Plane) -> Result<LnInput> {
    if lhat.dims() != (raw.height(), raw.width(), 1) {
        return Err(Error::Shape {
            op: "build_ln_input",
            expected: format!("{}x{}x1", raw.height(), raw.width()),
            got: format!("{:?}", lhat.dims()),
        });
    }
    if !lhat.data().iter().all(|&l| l > 0.0 && l.is_finite()) {
        return Err(invalid("luminance must be strictly positive"));
    }
    let LdrInput { sparse: x, dense: hx } = ldr_input(raw, pattern)?;
    let (xi, hxi) = corrected_irradiance(raw, pattern, spec)?;
    Ok(LnInput {
        x,
        hx,
        xi_norm: divide_by(&xi, lhat),
        hxi_norm: divide_by(&hxi, lhat),
    })
}

// ---------------------------------------------------- tensor plumbing

/// Stacks equally sized planes into an NCHW batch.
pub fn planes_to_tensor(planes: &[Plane]) -> Result<Tensor> {
    let first = planes.first().ok_or_else(|| invalid("empty batch"))?;
    let (h, w, c) = first.dims();
    let mut t = Tensor::zeros(planes.len(), c, h, w);
    let len = c * h * w;
    for (n, p) in planes.iter().enumerate() {
        first.same_dims(p, "planes_to_tensor")?;
        let dst = &mut t.data_mut()[n * len..(n + 1) * len];
        for (i, px) in p.data().chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                dst[ch * h * w + i] = v;
            }
        }
    }
    Ok(t)
}

/// Sample `n` of an NCHW tensor as a plane.
pub fn tensor_to_plane(t: &Tensor, n: usize) -> Plane {
    let [_, c, h, w] = t.shape();
    let src = t.sample(n);
    Plane::from_fn(h, w, c, |y, x, ch| src[ch * h * w + y * w + x])
}

/// Runs a network on one full image, mirror-padding the input planes up to
/// the network's spatial multiple and cropping the output back.
pub fn run_net(net: &SnapshotNet, sparse: &Plane, dense: &Plane) -> Result<Plane> {
    sparse.same_dims(&Plane::zeros(dense.height(), dense.width(), sparse.channels()), "run_net")?;
    let m = net.config().spatial_multiple();
    let (h, w) = (sparse.height(), sparse.width());
    let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
    let (s, d) = if (ph, pw) == (h, w) {
        (planes_to_tensor(std::slice::from_ref(sparse))?, planes_to_tensor(std::slice::from_ref(dense))?)
    } else {
        (
            planes_to_tensor(&[sparse.mirror_pad(ph, pw)?])?,
            planes_to_tensor(&[dense.mirror_pad(ph, pw)?])?,
        )
    };
    let out = tensor_to_plane(&net.infer(&s, &d)?, 0);
    if !out.is_finite() {
        return Err(NetError::NonFinite("network output").into());
    }
    if (ph, pw) == (h, w) {
        Ok(out)
    } else {
        out.crop(0, 0, h, w)
    }
}

// ------------------------------------------------------------ sampling

/// One training image: aligned network inputs, target and an optional
/// per-pixel scale (the luminance, for the linear-domain loss).
#[derive(Debug, Clone)]
pub struct TrainImage {
    pub sparse: Plane,
    pub dense: Plane,
    pub target: Plane,
    pub scale: Option<Plane>,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub sparse: Tensor,
    pub dense: Tensor,
    pub target: Tensor,
    pub scale: Option<Tensor>,
}

/// Uniform patch positions over all valid top-left corners, with an
/// independent flip/transpose draw per patch applied to every plane.
pub fn sample_batch(images: &[TrainImage], patch: usize, batch: usize, augment: bool, rng: &mut ChaCha8Rng) -> Result<Batch> {
    if images.is_empty() {
        return Err(invalid("empty dataset"));
    }
    let mut parts: [Vec<Plane>; 4] = Default::default();
    for _ in 0..batch {
        let img = &images[rng.gen_range(0..images.len())];
        let (h, w) = (img.target.height(), img.target.width());
        if patch > h || patch > w {
            return Err(invalid(format!("patch {patch} larger than image {h}x{w}")));
        }
        let y0 = rng.gen_range(0..=h - patch);
        let x0 = rng.gen_range(0..=w - patch);
        let aug = if augment {
            Augment {
                flip_h: rng.gen(),
                flip_v: rng.gen(),
                transpose: rng.gen(),
            }
        } else {
            Augment::IDENTITY
        };
        let take = |p: &Plane| p.crop(y0, x0, patch, patch).map(|c| aug.apply(&c));
        parts[0].push(take(&img.sparse)?);
        parts[1].push(take(&img.dense)?);
        parts[2].push(take(&img.target)?);
        if let Some(s) = &img.scale {
            parts[3].push(take(s)?);
        }
    }
    let [sparse, dense, target, scale] = parts;
    Ok(Batch {
        sparse: planes_to_tensor(&sparse)?,
        dense: planes_to_tensor(&dense)?,
        target: planes_to_tensor(&target)?,
        scale: if scale.is_empty() { None } else { Some(planes_to_tensor(&scale)?) },
    })
}

// ------------------------------------------------------------ training

#[derive(Debug, Clone)]
pub struct Trained {
    pub net: SnapshotNet,
    pub losses: Vec<f64>,
}

/// Called after every iteration with `(iteration, loss)`.
pub type Progress<'a> = &'a mut dyn FnMut(usize, f64);

fn train_loop<L>(images: &[TrainImage], net_cfg: NetConfig, cfg: &TrainConfig, loss: L, mut progress: Option<Progress>) -> Result<Trained>
where
    L: Fn(&Tensor, &Batch) -> std::result::Result<(f64, Tensor), NetError>,
{
    cfg.validate()?;
    if images.is_empty() {
        return Err(invalid("empty dataset"));
    }
    let m = net_cfg.spatial_multiple();
    if !cfg.patch_size.is_multiple_of(m) {
        return Err(invalid(format!(
            "patch size {} not divisible by {m} for depth {}",
            cfg.patch_size, net_cfg.unet.depth
        )));
    }
    let mut net = SnapshotNet::new(net_cfg, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(net.params(), cfg.lr, cfg.beta1, cfg.beta2);
    let mut losses = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let batch = sample_batch(images, cfg.patch_size, cfg.batch_size, cfg.augment, &mut rng)?;
        let (out, trace) = net.forward(&batch.sparse, &batch.dense)?;
        let (l, grad) = loss(&out, &batch)?;
        if !l.is_finite() {
            return Err(NetError::NonFinite("training loss").into());
        }
        let grads = net.backward(&trace, &grad)?;
        adam.step(net.params_mut(), &grads)?;
        losses.push(l);
        if let Some(p) = progress.as_mut() {
            p(it, l);
        }
    }
    Ok(Trained { net, losses })
}

fn check_dataset(data: &[Simulation], pattern: &MosaicPattern) -> Result<()> {
    if data.is_empty() {
        return Err(invalid("empty dataset"));
    }
    if data.iter().any(|s| s.ldr.len() != pattern.exposures()) {
        return Err(invalid("exposure stack size does not match the pattern"));
    }
    Ok(())
}

/// Trains the LDR interpolation network on `(x, h(x)) → exposure stack`.
pub fn train_ldr_i_net(
    data: &[Simulation],
    pattern: &MosaicPattern,
    cfg: &TrainConfig,
    settings: &NetSettings,
    progress: Option<Progress>,
) -> Result<Trained> {
    check_dataset(data, pattern)?;
    let images = data
        .iter()
        .map(|s| {
            let inp = ldr_input(&s.raw, pattern)?;
            Ok(TrainImage {
                sparse: inp.sparse,
                dense: inp.dense,
                target: ldr_target(&s.ldr)?,
                scale: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let net_cfg = settings.net_config(SITES, SITES, 3 * pattern.exposures());
    let lambda = cfg.lambda;
    train_loop(&images, net_cfg, cfg, |out, b| loss_ldr(out, &b.target, lambda), progress)
}

#[derive(Debug, Clone)]
pub struct LuminanceEstimate {
    /// Clamped below at `epsilon_l`.
    pub lhat: Plane,
    /// Network LDR predictions clipped to `[0, 1]`, one per exposure.
    pub ldr_pred: Vec<Plane>,
    pub merged: Plane,
}

pub fn luminance_from_ldr(ldr_pred: Vec<Plane>, spec: &ExposureSpec, epsilon_l: f64) -> Result<LuminanceEstimate> {
    let merged = debevec_merge(&ldr_pred, spec, WeightFn::Hat)?;
    let lhat = tentative_luminance(&merged).map(|l| l.max(epsilon_l));
    Ok(LuminanceEstimate {
        lhat,
        ldr_pred,
        merged,
    })
}

pub fn estimate_luminance(
    raw: &Plane,
    pattern: &MosaicPattern,
    spec: &ExposureSpec,
    ldr_net: &SnapshotNet,
    epsilon_l: f64,
) -> Result<LuminanceEstimate> {
    let inp = ldr_input(raw, pattern)?;
    let out = run_net(ldr_net, &inp.sparse, &inp.dense)?;
    let k = spec.levels();
    if out.channels() != 3 * k {
        return Err(invalid(format!("LDR network predicts {} channels, expected {}", out.channels(), 3 * k)));
    }
    let ldr_pred = (0..k)
        .map(|e| out.channel_range(3 * e, 3).map(|v| v.clamp(0.0, 1.0)))
        .collect();
    luminance_from_ldr(ldr_pred, spec, epsilon_l)
}

/// Trains the second network against `E / L̂` (or `E` for the linear
/// domain), with `L̂` from the frozen first-stage network on whole images.
#[allow(clippy::too_many_arguments)]
pub fn train_ln_net(
    data: &[Simulation],
    ldr_net: &SnapshotNet,
    pattern: &MosaicPattern,
    spec: &ExposureSpec,
    cfg: &TrainConfig,
    settings: &NetSettings,
    domain: LossDomain,
    progress: Option<Progress>,
) -> Result<Trained> {
    check_dataset(data, pattern)?;
    let images = data
        .iter()
        .map(|s| {
            let lum = estimate_luminance(&s.raw, pattern, spec, ldr_net, cfg.epsilon_l)?;
            let ln = build_ln_input(&s.raw, pattern, spec, &lum.lhat)?;
            let (target, scale) = match domain {
                LossDomain::LuminanceNormalized => (divide_by(&s.hdr_norm, &lum.lhat), None),
                LossDomain::Linear => (s.hdr_norm.clone(), Some(lum.lhat)),
            };
            Ok(TrainImage {
                sparse: ln.sparse(),
                dense: ln.dense(),
                target,
                scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let net_cfg = settings.net_config(2 * SITES, 2 * SITES, 3);
    let lambda = cfg.lambda;
    train_loop(
        &images,
        net_cfg,
        cfg,
        |out, b| match &b.scale {
            None => loss_ln(out, &b.target, lambda),
            Some(scale) => linear_domain_loss(out, scale, &b.target, lambda),
        },
        progress,
    )
}

/// Loss on `Ê = L̂ ⊙ g` against `E`, with its gradient w.r.t. `g`.
pub fn linear_domain_loss(g: &Tensor, lhat: &Tensor, truth: &Tensor, lambda: f64) -> std::result::Result<(f64, Tensor), NetError> {
    let ehat = broadcast_mul(g, lhat);
    let (l, d_ehat) = loss_ln(&ehat, truth, lambda)?;
    Ok((l, broadcast_mul(&d_ehat, lhat)))
}

/// Multiplies every channel of `a` by the single-channel `s`.
fn broadcast_mul(a: &Tensor, s: &Tensor) -> Tensor {
    let [n, c, h, w] = a.shape();
    let mut out = a.clone();
    let hw = h * w;
    for i in 0..n {
        let sc = &s.sample(i)[..hw];
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            for (v, f) in out.data_mut()[off..off + hw].iter_mut().zip(sc) {
                *v *= f;
            }
        }
    }
    out
}

// ---------------------------------------------------------- inference

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub hdr: Plane,
    pub luminance: LuminanceEstimate,
    /// Raw second-stage output `g`.
    pub normalized: Plane,
}

/// `Ê = max(L̂ ⊙ g, 0)`
pub fn compose_hdr(lhat: &Plane, g: &Plane) -> Plane {
    multiply_by(g, lhat).map(|v| v.max(0.0))
}

pub fn reconstruct(
    raw: &Plane,
    pattern: &MosaicPattern,
    spec: &ExposureSpec,
    ldr_net: &SnapshotNet,
    ln_net: &SnapshotNet,
    epsilon_l: f64,
) -> Result<Reconstruction> {
    let luminance = estimate_luminance(raw, pattern, spec, ldr_net, epsilon_l)?;
    let ln = build_ln_input(raw, pattern, spec, &luminance.lhat)?;
    let g = run_net(ln_net, &ln.sparse(), &ln.dense())?;
    if g.channels() != 3 {
        return Err(invalid(format!("second network predicts {} channels, expected 3", g.channels())));
    }
    Ok(Reconstruction {
        hdr: compose_hdr(&luminance.lhat, &g),
        luminance,
        normalized: g,
    })
}

/// Per-class interpolation of the mosaic followed by Debevec fusion.
pub fn baseline(raw: &Plane, pattern: &MosaicPattern, spec: &ExposureSpec) -> Result<Plane> {
    let inp = ldr_input(raw, pattern)?;
    let ldr = class_images(&inp.dense, pattern)?;
    debevec_merge(&ldr, spec, WeightFn::Hat)
}

// ------------------------------------------------------------ records

pub fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("iteration,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{i},{l}");
    }
    s
}

/// Config echo, seed and a loss summary as `key=value` lines.
pub fn run_manifest(echo: &str, seed: u64, losses: &[f64]) -> String {
    let mut s = String::new();
    s.push_str(echo);
    if !echo.ends_with('\n') && !echo.is_empty() {
        s.push('\n');
    }
    let _ = writeln!(s, "seed={seed}");
    let _ = writeln!(s, "iterations={}", losses.len());
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        let _ = writeln!(s, "loss.first={first}");
        let _ = writeln!(s, "loss.last={last}");
    }
    s
}
