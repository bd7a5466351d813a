//! Differentiable primitive operators.
//!
//! Each primitive comes as a forward map plus the vector–Jacobian product
//! with respect to its input, written directly (no autodiff graph). The
//! convolution also exposes a weight-gradient pass for the trainer.

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;
use rayon::prelude::*;

/// Dense 2-D convolution kernel with per-output-channel bias.
///
/// Weights are stored as `(out, in, kh, kw)` in row-major order. Kernel
/// dimensions must be odd so "same" zero padding is symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvKernel {
    /// Zero-initialized kernel.
    pub fn zeros(out_channels: usize, in_channels: usize, kernel_h: usize, kernel_w: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            weights: vec![0.0; out_channels * in_channels * kernel_h * kernel_w],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn from_parts(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != out_channels * in_channels * kernel_h * kernel_w {
            return Err(Error::Config(format!(
                "kernel weights: got {} values for shape ({},{},{},{})",
                weights.len(),
                out_channels,
                in_channels,
                kernel_h,
                kernel_w
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::Config(format!(
                "kernel bias: got {} values for {} output channels",
                bias.len(),
                out_channels
            )));
        }
        if kernel_h % 2 == 0 || kernel_w % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel dims must be odd, got {}x{}",
                kernel_h, kernel_w
            )));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            weights,
            bias,
        })
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, dy: usize, dx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * self.kernel_h + dy) * self.kernel_w + dx]
    }

    /// Number of stored parameters, weights plus biases.
    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[inline]
fn axpy(dst: &mut [f64], src: &[f64], w: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += w * *s;
    }
}

/// Valid output rows for a given tap offset under "same" padding.
#[inline]
fn same_range(len: usize, tap: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(tap);
    let hi = (len + pad).saturating_sub(tap).min(len);
    (lo, hi.max(lo))
}

/// Stride-1 convolution with zero "same" padding.
///
/// `out[o, y, x] = bias[o] + Σ_{i,dy,dx} w[o,i,dy,dx] · in[i, y+dy-⌊kh/2⌋, x+dx-⌊kw/2⌋]`
/// with zero contribution outside the input bounds.
pub fn conv2d_forward(input: &ImageTensor, kernel: &ConvKernel) -> Result<ImageTensor> {
    if input.channels() != kernel.in_channels {
        return Err(Error::Config(format!(
            "conv input has {} channels, kernel expects {}",
            input.channels(),
            kernel.in_channels
        )));
    }
    let (h, w) = (input.height(), input.width());
    let (ph, pw) = (kernel.kernel_h / 2, kernel.kernel_w / 2);
    let mut out = ImageTensor::zeros(kernel.out_channels, h, w);

    for o in 0..kernel.out_channels {
        let b = kernel.bias[o];
        for y in 0..h {
            for v in out.row_mut(o, y) {
                *v = b;
            }
        }
        for i in 0..kernel.in_channels {
            for dy in 0..kernel.kernel_h {
                let (y0, y1) = same_range(h, dy, ph);
                for dx in 0..kernel.kernel_w {
                    let wv = kernel.weight(o, i, dy, dx);
                    if wv == 0.0 {
                        continue;
                    }
                    let (x0, x1) = same_range(w, dx, pw);
                    if x0 >= x1 {
                        continue;
                    }
                    for y in y0..y1 {
                        let yi = y + dy - ph;
                        let src = &input.row(i, yi)[x0 + dx - pw..x1 + dx - pw];
                        axpy(&mut out.row_mut(o, y)[x0..x1], src, wv);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Vector–Jacobian product of [`conv2d_forward`] with respect to its input.
///
/// Equivalent to a full correlation of `upstream` with the kernel flipped in
/// both spatial axes; the bias contributes nothing.
pub fn conv2d_input_grad(upstream: &ImageTensor, kernel: &ConvKernel) -> Result<ImageTensor> {
    if upstream.channels() != kernel.out_channels {
        return Err(Error::Config(format!(
            "conv upstream has {} channels, kernel produces {}",
            upstream.channels(),
            kernel.out_channels
        )));
    }
    let (h, w) = (upstream.height(), upstream.width());
    let (ph, pw) = (kernel.kernel_h / 2, kernel.kernel_w / 2);
    let mut grad = ImageTensor::zeros(kernel.in_channels, h, w);

    // in[i, u, v] feeds out[o, u+ph-dy, v+pw-dx]; valid ranges are the
    // forward ones with tap and pad swapped.
    for i in 0..kernel.in_channels {
        for o in 0..kernel.out_channels {
            for dy in 0..kernel.kernel_h {
                let (u0, u1) = same_range(h, ph, dy);
                for dx in 0..kernel.kernel_w {
                    let wv = kernel.weight(o, i, dy, dx);
                    if wv == 0.0 {
                        continue;
                    }
                    let (v0, v1) = same_range(w, pw, dx);
                    if v0 >= v1 {
                        continue;
                    }
                    for u in u0..u1 {
                        let yu = u + ph - dy;
                        let src = &upstream.row(o, yu)[v0 + pw - dx..v1 + pw - dx];
                        axpy(&mut grad.row_mut(i, u)[v0..v1], src, wv);
                    }
                }
            }
        }
    }
    Ok(grad)
}

/// Gradient of a scalar loss with respect to a convolution's parameters.
#[derive(Debug, Clone)]
pub struct ConvGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvGrad {
    pub fn zeros_like(kernel: &ConvKernel) -> Self {
        Self {
            weights: vec![0.0; kernel.weights.len()],
            bias: vec![0.0; kernel.bias.len()],
        }
    }

    pub fn add_assign(&mut self, other: &ConvGrad) {
        for (d, s) in self.weights.iter_mut().zip(&other.weights) {
            *d += *s;
        }
        for (d, s) in self.bias.iter_mut().zip(&other.bias) {
            *d += *s;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for v in &mut self.weights {
            *v *= k;
        }
        for v in &mut self.bias {
            *v *= k;
        }
    }
}

/// Accumulates the parameter gradient of [`conv2d_forward`] into `grad`.
pub fn conv2d_weight_grad(
    upstream: &ImageTensor,
    input: &ImageTensor,
    kernel: &ConvKernel,
    grad: &mut ConvGrad,
) {
    debug_assert_eq!(upstream.channels(), kernel.out_channels);
    debug_assert_eq!(input.channels(), kernel.in_channels);
    let (h, w) = (input.height(), input.width());
    let (ph, pw) = (kernel.kernel_h / 2, kernel.kernel_w / 2);

    for o in 0..kernel.out_channels {
        grad.bias[o] += upstream.plane(o).iter().sum::<f64>();
        for i in 0..kernel.in_channels {
            for dy in 0..kernel.kernel_h {
                let (y0, y1) = same_range(h, dy, ph);
                for dx in 0..kernel.kernel_w {
                    let (x0, x1) = same_range(w, dx, pw);
                    if x0 >= x1 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let up = &upstream.row(o, y)[x0..x1];
                        let inp = &input.row(i, y + dy - ph)[x0 + dx - pw..x1 + dx - pw];
                        acc += up.iter().zip(inp).map(|(a, b)| a * b).sum::<f64>();
                    }
                    grad.weights
                        [((o * kernel.in_channels + i) * kernel.kernel_h + dy) * kernel.kernel_w
                            + dx] += acc;
                }
            }
        }
    }
}

/// Elementwise `max(x, 0)`.
pub fn relu_forward(input: &ImageTensor) -> ImageTensor {
    input.map(|v| v.max(0.0))
}

/// ReLU input gradient; the subgradient at exactly 0 is taken as 0.
pub fn relu_input_grad(upstream: &ImageTensor, saved_input: &ImageTensor) -> ImageTensor {
    debug_assert!(upstream.same_shape(saved_input));
    upstream.zip_map(saved_input, |u, x| if x > 0.0 { u } else { 0.0 })
}

/// Sub-pixel rearrangement: `(C, H, W) -> (C/r², rH, rW)`.
///
/// `out[c, r·y+a, r·x+b] = in[c·r² + a·r + b, y, x]`.
pub fn pixel_shuffle(input: &ImageTensor, r: usize) -> Result<ImageTensor> {
    if r == 0 || input.channels() % (r * r) != 0 {
        return Err(Error::Config(format!(
            "pixel shuffle: {} channels not divisible by {}²",
            input.channels(),
            r
        )));
    }
    let out_c = input.channels() / (r * r);
    let mut out = ImageTensor::zeros(out_c, input.height() * r, input.width() * r);
    for c in 0..out_c {
        for a in 0..r {
            for b in 0..r {
                let src_c = c * r * r + a * r + b;
                for y in 0..input.height() {
                    let src = input.row(src_c, y);
                    let dst = out.row_mut(c, r * y + a);
                    for (x, &v) in src.iter().enumerate() {
                        dst[r * x + b] = v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse permutation of [`pixel_shuffle`].
pub fn pixel_shuffle_grad(upstream: &ImageTensor, r: usize) -> Result<ImageTensor> {
    if r == 0 || upstream.height() % r != 0 || upstream.width() % r != 0 {
        return Err(Error::Config(format!(
            "pixel shuffle grad: {}x{} not divisible by {}",
            upstream.height(),
            upstream.width(),
            r
        )));
    }
    let (h, w) = (upstream.height() / r, upstream.width() / r);
    let mut out = ImageTensor::zeros(upstream.channels() * r * r, h, w);
    for c in 0..upstream.channels() {
        for a in 0..r {
            for b in 0..r {
                let dst_c = c * r * r + a * r + b;
                for y in 0..h {
                    let src = upstream.row(c, r * y + a);
                    let dst = out.row_mut(dst_c, y);
                    for (x, v) in dst.iter_mut().enumerate() {
                        *v = src[r * x + b];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Central-difference gradient estimate of a scalar function, one element at
/// a time: `(f(x+h·e) − f(x−h·e)) / 2h`.
///
/// This is the test oracle for every analytic gradient in the crate, so it
/// must stay independent of them. Elements are evaluated in parallel; the
/// result is assembled in index order.
pub fn finite_diff_gradient<F>(scalar_fn: F, input: &ImageTensor, step: f64) -> ImageTensor
where
    F: Fn(&ImageTensor) -> f64 + Sync,
{
    assert!(step > 0.0, "finite difference step must be positive");
    let (c, h, w) = input.shape();
    let grad: Vec<f64> = (0..input.len())
        .into_par_iter()
        .map(|idx| {
            let mut probe = input.clone();
            probe.data_mut()[idx] = input.data()[idx] + step;
            let plus = scalar_fn(&probe);
            probe.data_mut()[idx] = input.data()[idx] - step;
            let minus = scalar_fn(&probe);
            (plus - minus) / (2.0 * step)
        })
        .collect();
    ImageTensor::from_vec(c, h, w, grad).expect("shape preserved")
}

/// Relative error between an analytic gradient and its oracle.
pub fn relative_error(a: &ImageTensor, b: &ImageTensor) -> f64 {
    let denom = a.l2_norm().max(b.l2_norm());
    if denom == 0.0 {
        0.0
    } else {
        a.sub(b).l2_norm() / denom
    }
}
