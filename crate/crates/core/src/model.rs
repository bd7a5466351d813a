//! Differentiable super-resolution operators.
//!
//! Two model families share one layered representation: a bicubic baseline
//! (a single linear resize layer) and a micro residual CNN in the EDSR
//! style with sub-pixel upsampling. Every model exposes a forward map and
//! the vector–Jacobian product through all layers in reverse, which is what
//! the attacks consume.

use crate::error::{Error, Result};
use crate::ops::{
    conv2d_forward, conv2d_input_grad, conv2d_weight_grad, pixel_shuffle, pixel_shuffle_grad,
    relu_forward, relu_input_grad, ConvGrad, ConvKernel,
};
use crate::resize::{bicubic_resize, bicubic_resize_grad};
use crate::tensor::ImageTensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Configuration of the micro residual CNN.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroEdsrConfig {
    /// Feature width of the body convolutions.
    pub channels: usize,
    /// Number of residual blocks.
    pub blocks: usize,
    /// Scalar applied to each block's branch before the skip add.
    pub residual_scaling: f64,
    /// Upscale factor, 2 or 4.
    pub scale: usize,
}

impl Default for MicroEdsrConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            blocks: 4,
            residual_scaling: 0.1,
            scale: 4,
        }
    }
}

impl MicroEdsrConfig {
    /// The two shipped presets: `micro` (16ch/4blk) and `micro-large` (32ch/8blk).
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "micro" => Ok(Self::default()),
            "micro-large" => Ok(Self {
                channels: 32,
                blocks: 8,
                ..Self::default()
            }),
            other => Err(Error::Config(format!(
                "unknown preset '{}' (expected micro or micro-large)",
                other
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("channels must be >= 1".into()));
        }
        if self.scale != 2 && self.scale != 4 {
            return Err(Error::Config(format!(
                "scale must be 2 or 4, got {}",
                self.scale
            )));
        }
        Ok(())
    }
}

/// Structural description retained for weight files.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    Bicubic { scale: usize },
    MicroEdsr(MicroEdsrConfig),
}

/// One layer of an [`SRModel`]. Convolutions refer to kernels by index so
/// the weights stay enumerable for the trainer and the weight file.
#[derive(Debug, Clone)]
pub enum Layer {
    Conv(usize),
    Relu,
    PixelShuffle(usize),
    /// `out = x + scaling * conv2(relu(conv1(x)))`
    ResidualBlock {
        conv1: usize,
        conv2: usize,
        scaling: f64,
    },
    /// `out = x + group(x)`
    SkipGroup(Vec<Layer>),
    Bicubic {
        scale: usize,
    },
}

/// Saved forward state, one entry per layer, consumed by the backward pass.
pub(crate) enum LayerCtx {
    Stateless,
    Conv { input: ImageTensor },
    Relu { input: ImageTensor },
    Block { input: ImageTensor, pre_act: ImageTensor },
    Group(Vec<LayerCtx>),
    Bicubic { in_h: usize, in_w: usize },
}

/// A layered differentiable SR operator `f: (C, H, W) -> (C', s·H, s·W)`.
#[derive(Debug, Clone)]
pub struct SRModel {
    name: String,
    scale: usize,
    input_channels: Option<usize>,
    config: ModelConfig,
    kernels: Vec<ConvKernel>,
    layers: Vec<Layer>,
}

impl SRModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kernels(&self) -> &[ConvKernel] {
        &self.kernels
    }

    pub(crate) fn kernels_mut(&mut self) -> &mut [ConvKernel] {
        &mut self.kernels
    }

    /// Total parameter count over all kernels.
    pub fn param_count(&self) -> usize {
        self.kernels.iter().map(|k| k.param_count()).sum()
    }

    fn check_input(&self, x: &ImageTensor) -> Result<()> {
        if let Some(c) = self.input_channels {
            if x.channels() != c {
                return Err(Error::ShapeMismatch(format!(
                    "model '{}' expects {} input channels, got {}",
                    self.name,
                    c,
                    x.channels()
                )));
            }
        }
        Ok(())
    }

    /// Super-resolves `x`. Deterministic, pure, thread-safe.
    pub fn forward(&self, x: &ImageTensor) -> Result<ImageTensor> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = self.layer_forward(layer, cur)?.0;
        }
        Ok(cur)
    }

    pub(crate) fn forward_ctx(&self, x: &ImageTensor) -> Result<(ImageTensor, Vec<LayerCtx>)> {
        self.check_input(x)?;
        let mut cur = x.clone();
        let mut ctxs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, ctx) = self.layer_forward(layer, cur)?;
            cur = next;
            ctxs.push(ctx);
        }
        Ok((cur, ctxs))
    }

    /// Vector–Jacobian product with respect to the input: pulls `upstream`
    /// (at SR resolution) back through all layers in reverse.
    pub fn input_gradient(&self, x: &ImageTensor, upstream: &ImageTensor) -> Result<ImageTensor> {
        let (out, ctxs) = self.forward_ctx(x)?;
        if !out.same_shape(upstream) {
            return Err(Error::ShapeMismatch(format!(
                "upstream {:?} does not match model output {:?}",
                upstream.shape(),
                out.shape()
            )));
        }
        self.backward(&ctxs, upstream.clone(), None)
    }

    /// Backward pass over saved contexts. When `grads` is given, parameter
    /// gradients are accumulated into it (one slot per kernel).
    pub(crate) fn backward(
        &self,
        ctxs: &[LayerCtx],
        upstream: ImageTensor,
        mut grads: Option<&mut Vec<ConvGrad>>,
    ) -> Result<ImageTensor> {
        let mut g = upstream;
        for (layer, ctx) in self.layers.iter().zip(ctxs).rev() {
            g = self.layer_backward(layer, ctx, g, grads.as_deref_mut())?;
        }
        Ok(g)
    }

    fn layer_forward(&self, layer: &Layer, x: ImageTensor) -> Result<(ImageTensor, LayerCtx)> {
        match layer {
            Layer::Conv(k) => {
                let out = conv2d_forward(&x, &self.kernels[*k])?;
                Ok((out, LayerCtx::Conv { input: x }))
            }
            Layer::Relu => {
                let out = relu_forward(&x);
                Ok((out, LayerCtx::Relu { input: x }))
            }
            Layer::PixelShuffle(r) => Ok((pixel_shuffle(&x, *r)?, LayerCtx::Stateless)),
            Layer::ResidualBlock {
                conv1,
                conv2,
                scaling,
            } => {
                let pre_act = conv2d_forward(&x, &self.kernels[*conv1])?;
                let branch = conv2d_forward(&relu_forward(&pre_act), &self.kernels[*conv2])?;
                let out = x.add(&branch.scale(*scaling));
                Ok((out, LayerCtx::Block { input: x, pre_act }))
            }
            Layer::SkipGroup(inner) => {
                let mut cur = x.clone();
                let mut ctxs = Vec::with_capacity(inner.len());
                for l in inner {
                    let (next, ctx) = self.layer_forward(l, cur)?;
                    cur = next;
                    ctxs.push(ctx);
                }
                Ok((x.add(&cur), LayerCtx::Group(ctxs)))
            }
            Layer::Bicubic { scale } => {
                let (in_h, in_w) = (x.height(), x.width());
                let out = bicubic_resize(&x, in_h * scale, in_w * scale)?;
                Ok((out, LayerCtx::Bicubic { in_h, in_w }))
            }
        }
    }

    fn layer_backward(
        &self,
        layer: &Layer,
        ctx: &LayerCtx,
        upstream: ImageTensor,
        mut grads: Option<&mut Vec<ConvGrad>>,
    ) -> Result<ImageTensor> {
        match (layer, ctx) {
            (Layer::Conv(k), LayerCtx::Conv { input }) => {
                if let Some(gs) = grads.as_deref_mut() {
                    conv2d_weight_grad(&upstream, input, &self.kernels[*k], &mut gs[*k]);
                }
                conv2d_input_grad(&upstream, &self.kernels[*k])
            }
            (Layer::Relu, LayerCtx::Relu { input }) => Ok(relu_input_grad(&upstream, input)),
            (Layer::PixelShuffle(r), LayerCtx::Stateless) => pixel_shuffle_grad(&upstream, *r),
            (
                Layer::ResidualBlock {
                    conv1,
                    conv2,
                    scaling,
                },
                LayerCtx::Block { input, pre_act },
            ) => {
                let g_branch = upstream.scale(*scaling);
                if let Some(gs) = grads.as_deref_mut() {
                    let act = relu_forward(pre_act);
                    conv2d_weight_grad(&g_branch, &act, &self.kernels[*conv2], &mut gs[*conv2]);
                }
                let g_act = conv2d_input_grad(&g_branch, &self.kernels[*conv2])?;
                let g_pre = relu_input_grad(&g_act, pre_act);
                if let Some(gs) = grads.as_deref_mut() {
                    conv2d_weight_grad(&g_pre, input, &self.kernels[*conv1], &mut gs[*conv1]);
                }
                let g_in = conv2d_input_grad(&g_pre, &self.kernels[*conv1])?;
                Ok(upstream.add(&g_in))
            }
            (Layer::SkipGroup(inner), LayerCtx::Group(ctxs)) => {
                let mut g = upstream.clone();
                for (l, c) in inner.iter().zip(ctxs).rev() {
                    g = self.layer_backward(l, c, g, grads.as_deref_mut())?;
                }
                Ok(upstream.add(&g))
            }
            (Layer::Bicubic { .. }, LayerCtx::Bicubic { in_h, in_w }) => {
                bicubic_resize_grad(&upstream, *in_h, *in_w)
            }
            _ => Err(Error::Config(
                "internal: layer/context mismatch in backward pass".into(),
            )),
        }
    }

    /// Fresh zero gradient buffers, one per kernel.
    pub(crate) fn zero_grads(&self) -> Vec<ConvGrad> {
        self.kernels.iter().map(ConvGrad::zeros_like).collect()
    }
}

/// The bicubic baseline: `f(X) = bicubic_resize(X, s·H, s·W)`.
pub fn build_bicubic_model(scale: usize) -> Result<SRModel> {
    if scale < 1 {
        return Err(Error::Config("bicubic model scale must be >= 1".into()));
    }
    Ok(SRModel {
        name: "bicubic".into(),
        scale,
        input_channels: None,
        config: ModelConfig::Bicubic { scale },
        kernels: Vec::new(),
        layers: vec![Layer::Bicubic { scale }],
    })
}

/// Builds the micro residual CNN with seeded uniform weight initialization.
///
/// Architecture: head conv, `blocks` residual blocks plus one conv under a
/// global skip, one conv + x2 pixel shuffle per upsampling stage, and a
/// tail conv back to 3 channels. All convolutions are 3x3.
pub fn build_micro_edsr(config: &MicroEdsrConfig, seed: u64) -> Result<SRModel> {
    config.validate()?;
    let c = config.channels;
    let mut kernels: Vec<ConvKernel> = Vec::new();
    let push = |kernels: &mut Vec<ConvKernel>, out: usize, inp: usize| -> usize {
        kernels.push(ConvKernel::zeros(out, inp, 3, 3));
        kernels.len() - 1
    };

    let head = push(&mut kernels, c, 3);
    let mut body = Vec::with_capacity(config.blocks + 1);
    for _ in 0..config.blocks {
        let conv1 = push(&mut kernels, c, c);
        let conv2 = push(&mut kernels, c, c);
        body.push(Layer::ResidualBlock {
            conv1,
            conv2,
            scaling: config.residual_scaling,
        });
    }
    body.push(Layer::Conv(push(&mut kernels, c, c)));

    let mut layers = vec![Layer::Conv(head), Layer::SkipGroup(body)];
    let stages = if config.scale == 4 { 2 } else { 1 };
    for _ in 0..stages {
        layers.push(Layer::Conv(push(&mut kernels, 4 * c, c)));
        layers.push(Layer::PixelShuffle(2));
    }
    layers.push(Layer::Conv(push(&mut kernels, 3, c)));

    // Seeded init: weights uniform in [-k, k] with k = fan_in^(-1/2),
    // biases zero. Kernels are filled in index order so the same seed
    // always yields bit-identical weights.
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for kernel in &mut kernels {
        let fan_in = (kernel.in_channels * kernel.kernel_h * kernel.kernel_w) as f64;
        let k = fan_in.powf(-0.5);
        for w in &mut kernel.weights {
            *w = rng.random_range(-k..=k);
        }
    }

    Ok(SRModel {
        name: "micro-edsr".into(),
        scale: config.scale,
        input_channels: Some(3),
        config: ModelConfig::MicroEdsr(config.clone()),
        kernels,
        layers,
    })
}
