//! RAW-adapted U-Net.
//!
//! The network takes two spatially aligned inputs: a sparse sub-mosaicked
//! stack and a dense interpolated stack. Each passes through its own
//! conv + ReLU adaptation block (7×7 for sparse, 3×3 for dense); the results
//! are concatenated and fed into a U-Net trunk:
//!
//! ```text
//! encoder  (conv-relu, conv-relu, maxpool) × (depth - 1)
//! bottom   conv-relu, conv-relu
//! decoder  (upsample, concat skip, conv-relu, conv-relu) × (depth - 1)
//! head     1×1 conv
//! ```
//!
//! Channel width at level `l` is `base_channels << l`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conv::{conv2d_backward, conv2d_forward};
use crate::error::{NetError, Result};
use crate::ops;
use crate::param::{Grads, ParamId, ParamSet};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsampleMode {
    Nearest,
    /// Learned 2×2 stride-2 transposed convolution mapping `c_{l+1} -> c_l`.
    TransposedConv,
}

impl UpsampleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            UpsampleMode::Nearest => "nearest",
            UpsampleMode::TransposedConv => "transposed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nearest" => Some(UpsampleMode::Nearest),
            "transposed" => Some(UpsampleMode::TransposedConv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UNetConfig {
    pub depth: usize,
    pub base_channels: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub upsample: UpsampleMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationConfig {
    pub sparse_in: usize,
    pub dense_in: usize,
    pub sparse_out: usize,
    pub dense_out: usize,
    pub sparse_kernel: usize,
    pub dense_kernel: usize,
}

impl AdaptationConfig {
    pub fn new(sparse_in: usize, dense_in: usize, width: usize) -> Self {
        Self {
            sparse_in,
            dense_in,
            sparse_out: width,
            dense_out: width,
            sparse_kernel: 7,
            dense_kernel: 3,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.sparse_out + self.dense_out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub adaptation: AdaptationConfig,
    pub unet: UNetConfig,
}

impl NetConfig {
    /// Adaptation blocks of equal width feeding a U-Net with a 3×3 kernel.
    pub fn new(
        sparse_in: usize,
        dense_in: usize,
        adapt_width: usize,
        depth: usize,
        base_channels: usize,
        out_channels: usize,
    ) -> Self {
        let adaptation = AdaptationConfig::new(sparse_in, dense_in, adapt_width);
        let unet = UNetConfig {
            depth,
            base_channels,
            in_channels: adaptation.out_channels(),
            out_channels,
            kernel_size: 3,
            upsample: UpsampleMode::Nearest,
        };
        Self { adaptation, unet }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, u) = (&self.adaptation, &self.unet);
        if u.depth == 0 {
            return Err(NetError::Config("depth must be at least 1".into()));
        }
        if u.depth > 12 {
            return Err(NetError::Config(format!("depth {} is unreasonably large", u.depth)));
        }
        if u.base_channels == 0 || u.out_channels == 0 || a.sparse_out == 0 || a.dense_out == 0 {
            return Err(NetError::Config("channel counts must be positive".into()));
        }
        if a.sparse_in == 0 || a.dense_in == 0 {
            return Err(NetError::Config("both input branches need channels".into()));
        }
        for k in [u.kernel_size, a.sparse_kernel, a.dense_kernel] {
            if k % 2 == 0 {
                return Err(NetError::Config(format!("kernel size {k} must be odd")));
            }
        }
        if u.in_channels != a.out_channels() {
            return Err(NetError::Config(format!(
                "trunk expects {} channels but adaptation yields {}",
                u.in_channels,
                a.out_channels()
            )));
        }
        Ok(())
    }

    /// Spatial dims must be multiples of this.
    pub fn spatial_multiple(&self) -> usize {
        1 << (self.unet.depth - 1)
    }

    fn width(&self, level: usize) -> usize {
        self.unet.base_channels << level
    }

    /// Number of scalar parameters implied by the configuration.
    pub fn param_count(&self) -> usize {
        let conv = |ci: usize, co: usize, k: usize| co * ci * k * k + co;
        let a = &self.adaptation;
        let u = &self.unet;
        let k = u.kernel_size;
        let mut total = conv(a.sparse_in, a.sparse_out, a.sparse_kernel) + conv(a.dense_in, a.dense_out, a.dense_kernel);
        let mut prev = u.in_channels;
        for l in 0..u.depth {
            let c = self.width(l);
            total += conv(prev, c, k) + conv(c, c, k);
            prev = c;
        }
        for l in (0..u.depth.saturating_sub(1)).rev() {
            let c = self.width(l);
            let low = self.width(l + 1);
            let merged = match u.upsample {
                UpsampleMode::Nearest => low + c,
                UpsampleMode::TransposedConv => {
                    total += low * c * 4 + c;
                    2 * c
                }
            };
            total += conv(merged, c, k) + conv(c, c, k);
        }
        total + conv(self.width(0), u.out_channels, 1)
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvLayer {
    weight: ParamId,
    bias: ParamId,
    in_ch: usize,
    out_ch: usize,
    k: usize,
}

impl ConvLayer {
    fn new(params: &mut ParamSet, name: &str, in_ch: usize, out_ch: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = params.push_uniform(format!("{name}.weight"), vec![out_ch, in_ch, k, k], in_ch * k * k, rng);
        let bias = params.push_zeros(format!("{name}.bias"), vec![out_ch]);
        Self {
            weight,
            bias,
            in_ch,
            out_ch,
            k,
        }
    }

    fn forward(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
        if x.c() != self.in_ch {
            return Err(NetError::ShapeMismatch {
                op: "conv layer input",
                expected: vec![self.in_ch],
                got: x.shape().to_vec(),
            });
        }
        conv2d_forward(x, params.get(self.weight), params.get(self.bias), self.out_ch, self.k)
    }

    fn backward(
        &self,
        params: &ParamSet,
        grads: &mut Grads,
        input: &Tensor,
        grad_out: &Tensor,
        need_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        let g = conv2d_backward(grad_out, input, params.get(self.weight), self.k, need_input_grad)?;
        add_into(grads.get_mut(self.weight), &g.weight);
        add_into(grads.get_mut(self.bias), &g.bias);
        Ok(g.input)
    }
}

#[derive(Debug, Clone, Copy)]
struct UpLayer {
    weight: ParamId,
    bias: ParamId,
    out_ch: usize,
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

/// Activations kept for one conv + ReLU block.
#[derive(Debug, Clone)]
struct BlockTrace {
    input: Tensor,
    output: Tensor,
}

#[derive(Debug, Clone)]
struct DecoderTrace {
    low: Tensor,
    skip_channels: usize,
    conv1: BlockTrace,
    conv2: BlockTrace,
}

#[derive(Debug, Clone)]
struct EncoderTrace {
    conv1: BlockTrace,
    conv2: BlockTrace,
    argmax: Vec<usize>,
}

/// Saved forward state consumed by [`SnapshotNet::backward`].
#[derive(Debug, Clone, Default)]
pub struct Trace {
    sparse: Option<BlockTrace>,
    dense: Option<BlockTrace>,
    encoder: Vec<EncoderTrace>,
    bottom: Vec<BlockTrace>,
    decoder: Vec<DecoderTrace>,
    head_input: Option<Tensor>,
}

/// The full network: RAW adaptation blocks plus U-Net trunk.
#[derive(Debug, Clone)]
pub struct SnapshotNet {
    config: NetConfig,
    params: ParamSet,
    sparse: ConvLayer,
    dense: ConvLayer,
    encoder: Vec<(ConvLayer, ConvLayer)>,
    bottom: (ConvLayer, ConvLayer),
    decoder: Vec<(Option<UpLayer>, ConvLayer, ConvLayer)>,
    head: ConvLayer,
}

fn block_forward(layer: &ConvLayer, params: &ParamSet, x: Tensor) -> Result<BlockTrace> {
    let output = ops::relu_forward(&layer.forward(params, &x)?);
    Ok(BlockTrace { input: x, output })
}

fn block_backward(
    layer: &ConvLayer,
    params: &ParamSet,
    grads: &mut Grads,
    trace: &BlockTrace,
    grad_out: &Tensor,
    need_input_grad: bool,
) -> Result<Option<Tensor>> {
    let g = ops::relu_backward(grad_out, &trace.output)?;
    layer.backward(params, grads, &trace.input, &g, need_input_grad)
}

impl SnapshotNet {
    /// Builds a network with weights drawn from a ChaCha stream seeded by `seed`.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let a = &config.adaptation;
        let u = &config.unet;
        let k = u.kernel_size;
        let sparse = ConvLayer::new(&mut params, "adapt.sparse", a.sparse_in, a.sparse_out, a.sparse_kernel, &mut rng);
        let dense = ConvLayer::new(&mut params, "adapt.dense", a.dense_in, a.dense_out, a.dense_kernel, &mut rng);

        let mut encoder = Vec::new();
        let mut prev = u.in_channels;
        for l in 0..u.depth - 1 {
            let c = config.width(l);
            let c1 = ConvLayer::new(&mut params, &format!("enc{l}.conv1"), prev, c, k, &mut rng);
            let c2 = ConvLayer::new(&mut params, &format!("enc{l}.conv2"), c, c, k, &mut rng);
            encoder.push((c1, c2));
            prev = c;
        }
        let cb = config.width(u.depth - 1);
        let bottom = (
            ConvLayer::new(&mut params, "bottom.conv1", prev, cb, k, &mut rng),
            ConvLayer::new(&mut params, "bottom.conv2", cb, cb, k, &mut rng),
        );

        let mut decoder = Vec::new();
        for l in (0..u.depth - 1).rev() {
            let c = config.width(l);
            let low = config.width(l + 1);
            let (up, merged) = match u.upsample {
                UpsampleMode::Nearest => (None, low + c),
                UpsampleMode::TransposedConv => {
                    let weight = params.push_uniform(format!("dec{l}.up.weight"), vec![low, c, 2, 2], low, &mut rng);
                    let bias = params.push_zeros(format!("dec{l}.up.bias"), vec![c]);
                    (Some(UpLayer { weight, bias, out_ch: c }), 2 * c)
                }
            };
            let c1 = ConvLayer::new(&mut params, &format!("dec{l}.conv1"), merged, c, k, &mut rng);
            let c2 = ConvLayer::new(&mut params, &format!("dec{l}.conv2"), c, c, k, &mut rng);
            decoder.push((up, c1, c2));
        }
        let head = ConvLayer::new(&mut params, "head", config.width(0), u.out_channels, 1, &mut rng);

        Ok(Self {
            config,
            params,
            sparse,
            dense,
            encoder,
            bottom,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn check_inputs(&self, sparse: &Tensor, dense: &Tensor) -> Result<()> {
        let a = &self.config.adaptation;
        if sparse.c() != a.sparse_in || dense.c() != a.dense_in {
            return Err(NetError::ShapeMismatch {
                op: "network inputs",
                expected: vec![a.sparse_in, a.dense_in],
                got: vec![sparse.c(), dense.c()],
            });
        }
        if sparse.n() != dense.n() || sparse.h() != dense.h() || sparse.w() != dense.w() {
            return Err(NetError::ShapeMismatch {
                op: "network inputs (alignment)",
                expected: sparse.shape().to_vec(),
                got: dense.shape().to_vec(),
            });
        }
        let m = self.config.spatial_multiple();
        if !sparse.h().is_multiple_of(m) || !sparse.w().is_multiple_of(m) || sparse.h() == 0 || sparse.w() == 0 {
            return Err(NetError::IndivisibleDims {
                op: "unet_forward",
                height: sparse.h(),
                width: sparse.w(),
                factor: m,
            });
        }
        Ok(())
    }

    /// RAW adaptation: `concat(relu(conv7(sparse)), relu(conv3(dense)))`.
    pub fn adapt(&self, sparse: &Tensor, dense: &Tensor) -> Result<Tensor> {
        self.check_inputs(sparse, dense)?;
        let s = ops::relu_forward(&self.sparse.forward(&self.params, sparse)?);
        let d = ops::relu_forward(&self.dense.forward(&self.params, dense)?);
        ops::concat_forward(&s, &d)
    }

    /// Forward pass that records everything needed for [`Self::backward`].
    pub fn forward(&self, sparse: &Tensor, dense: &Tensor) -> Result<(Tensor, Trace)> {
        self.check_inputs(sparse, dense)?;
        let p = &self.params;
        let mut trace = Trace::default();
        let s = block_forward(&self.sparse, p, sparse.clone())?;
        let d = block_forward(&self.dense, p, dense.clone())?;
        let mut h = ops::concat_forward(&s.output, &d.output)?;
        trace.sparse = Some(s);
        trace.dense = Some(d);

        for (c1, c2) in &self.encoder {
            let b1 = block_forward(c1, p, h)?;
            let b2 = block_forward(c2, p, b1.output.clone())?;
            let pooled = ops::maxpool2_forward(&b2.output)?;
            h = pooled.output;
            trace.encoder.push(EncoderTrace {
                conv1: b1,
                conv2: b2,
                argmax: pooled.argmax,
            });
        }

        let b1 = block_forward(&self.bottom.0, p, h)?;
        let b2 = block_forward(&self.bottom.1, p, b1.output.clone())?;
        h = b2.output.clone();
        trace.bottom = vec![b1, b2];

        for (i, (up, c1, c2)) in self.decoder.iter().enumerate() {
            let level = self.encoder.len() - 1 - i;
            let skip = &trace.encoder[level].conv2.output;
            let upsampled = match up {
                None => ops::upsample2_forward(&h),
                Some(u) => ops::upconv2_forward(&h, p.get(u.weight), p.get(u.bias), u.out_ch)?,
            };
            let merged = ops::concat_forward(&upsampled, skip)?;
            let skip_channels = skip.c();
            let b1 = block_forward(c1, p, merged)?;
            let b2 = block_forward(c2, p, b1.output.clone())?;
            let low = std::mem::replace(&mut h, b2.output.clone());
            trace.decoder.push(DecoderTrace {
                low,
                skip_channels,
                conv1: b1,
                conv2: b2,
            });
        }

        let out = self.head.forward(p, &h)?;
        trace.head_input = Some(h);
        Ok((out, trace))
    }

    /// Forward pass without keeping activations around.
    pub fn infer(&self, sparse: &Tensor, dense: &Tensor) -> Result<Tensor> {
        self.forward(sparse, dense).map(|(out, _)| out)
    }

    /// Parameter gradients of `<grad_out, forward(...)>`.
    pub fn backward(&self, trace: &Trace, grad_out: &Tensor) -> Result<Grads> {
        let missing = || NetError::MissingSavedState("SnapshotNet::backward");
        if trace.encoder.len() != self.encoder.len()
            || trace.decoder.len() != self.decoder.len()
            || trace.bottom.len() != 2
        {
            return Err(missing());
        }
        let head_input = trace.head_input.as_ref().ok_or_else(missing)?;
        let p = &self.params;
        let mut grads = p.zero_grads();

        let mut g = self
            .head
            .backward(p, &mut grads, head_input, grad_out, true)?
            .expect("input grad");

        let mut skip_grads: Vec<Option<Tensor>> = vec![None; self.encoder.len()];
        for (i, ((up, c1, c2), dt)) in self.decoder.iter().zip(&trace.decoder).enumerate().rev() {
            let level = self.encoder.len() - 1 - i;
            let g2 = block_backward(c2, p, &mut grads, &dt.conv2, &g, true)?.expect("input grad");
            let g1 = block_backward(c1, p, &mut grads, &dt.conv1, &g2, true)?.expect("input grad");
            let up_channels = g1.c() - dt.skip_channels;
            let (g_up, g_skip) = ops::concat_backward(&g1, up_channels)?;
            skip_grads[level] = Some(g_skip);
            g = match up {
                None => ops::upsample2_backward(&g_up)?,
                Some(u) => {
                    let (gi, gw, gb) = ops::upconv2_backward(&g_up, &dt.low, p.get(u.weight))?;
                    add_into(grads.get_mut(u.weight), &gw);
                    add_into(grads.get_mut(u.bias), &gb);
                    gi
                }
            };
        }

        let g2 = block_backward(&self.bottom.1, p, &mut grads, &trace.bottom[1], &g, true)?.expect("input grad");
        g = block_backward(&self.bottom.0, p, &mut grads, &trace.bottom[0], &g2, true)?.expect("input grad");

        for (level, ((c1, c2), et)) in self.encoder.iter().zip(&trace.encoder).enumerate().rev() {
            let mut gs = ops::maxpool2_backward(&g, &et.argmax, et.conv2.output.shape())?;
            if let Some(skip) = skip_grads[level].take() {
                add_into(gs.data_mut(), skip.data());
            }
            let g2 = block_backward(c2, p, &mut grads, &et.conv2, &gs, true)?.expect("input grad");
            g = block_backward(c1, p, &mut grads, &et.conv1, &g2, true)?.expect("input grad");
        }

        let (s, d) = (
            trace.sparse.as_ref().ok_or_else(missing)?,
            trace.dense.as_ref().ok_or_else(missing)?,
        );
        let (gs, gd) = ops::concat_backward(&g, self.config.adaptation.sparse_out)?;
        block_backward(&self.sparse, p, &mut grads, s, &gs, false)?;
        block_backward(&self.dense, p, &mut grads, d, &gd, false)?;
        Ok(grads)
    }
}
