//! Separable bicubic resampling.
//!
//! Keys cubic convolution with `a = -0.5`, half-pixel-centered coordinate
//! mapping, and edge-clamped sampling. The operator is linear and never
//! clips its output, so its input gradient is exactly its transpose.

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

const A: f64 = -0.5;

/// Keys cubic kernel.
///
/// `k(t) = (a+2)|t|³ - (a+3)|t|² + 1` for `|t| <= 1`,
/// `a|t|³ - 5a|t|² + 8a|t| - 4a` for `1 < |t| < 2`, else 0.
pub fn keys_kernel(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * t * t * t - 5.0 * A * t * t + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

/// Four source taps and weights for one destination index of a 1-D pass.
#[derive(Debug, Clone, Copy)]
struct Taps {
    idx: [usize; 4],
    w: [f64; 4],
}

/// Tap table for resampling a 1-D axis of length `len_in` to `len_out`.
///
/// Source coordinate mapping: `src = (dst + 0.5) * (len_in / len_out) - 0.5`;
/// out-of-range taps clamp to the edge samples.
fn tap_table(len_in: usize, len_out: usize) -> Vec<Taps> {
    debug_assert!(len_in >= 1 && len_out >= 1);
    let scale = len_in as f64 / len_out as f64;
    (0..len_out)
        .map(|dst| {
            let src = (dst as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let t = src - base;
            let base = base as isize;
            let mut idx = [0usize; 4];
            let mut w = [0f64; 4];
            for (k, (i, wv)) in idx.iter_mut().zip(w.iter_mut()).enumerate() {
                let tap = base - 1 + k as isize;
                *i = tap.clamp(0, len_in as isize - 1) as usize;
                *wv = keys_kernel(t - (k as f64 - 1.0));
            }
            Taps { idx, w }
        })
        .collect()
}

fn resample_rows(input: &ImageTensor, taps: &[Taps]) -> ImageTensor {
    // Resampling along the vertical axis: output row y is a weighted sum of
    // four input rows.
    let (c, _, w) = input.shape();
    let mut out = ImageTensor::zeros(c, taps.len(), w);
    for ch in 0..c {
        for (y, tap) in taps.iter().enumerate() {
            let dst = out.row_mut(ch, y);
            for k in 0..4 {
                let src = input.row(ch, tap.idx[k]);
                let wv = tap.w[k];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += wv * *s;
                }
            }
        }
    }
    out
}

fn resample_cols(input: &ImageTensor, taps: &[Taps]) -> ImageTensor {
    let (c, h, _) = input.shape();
    let mut out = ImageTensor::zeros(c, h, taps.len());
    for ch in 0..c {
        for y in 0..h {
            let src = input.row(ch, y);
            let dst = out.row_mut(ch, y);
            for (d, tap) in dst.iter_mut().zip(taps) {
                *d = tap.w[0] * src[tap.idx[0]]
                    + tap.w[1] * src[tap.idx[1]]
                    + tap.w[2] * src[tap.idx[2]]
                    + tap.w[3] * src[tap.idx[3]];
            }
        }
    }
    out
}

fn scatter_rows(upstream: &ImageTensor, taps: &[Taps], len_in: usize) -> ImageTensor {
    let (c, _, w) = upstream.shape();
    let mut out = ImageTensor::zeros(c, len_in, w);
    for ch in 0..c {
        for (y, tap) in taps.iter().enumerate() {
            let src = upstream.row(ch, y).to_vec();
            for k in 0..4 {
                let wv = tap.w[k];
                let dst = out.row_mut(ch, tap.idx[k]);
                for (d, s) in dst.iter_mut().zip(&src) {
                    *d += wv * *s;
                }
            }
        }
    }
    out
}

fn scatter_cols(upstream: &ImageTensor, taps: &[Taps], len_in: usize) -> ImageTensor {
    let (c, h, _) = upstream.shape();
    let mut out = ImageTensor::zeros(c, h, len_in);
    for ch in 0..c {
        for y in 0..h {
            let src = upstream.row(ch, y).to_vec();
            let dst = out.row_mut(ch, y);
            for (s, tap) in src.iter().zip(taps) {
                for k in 0..4 {
                    dst[tap.idx[k]] += tap.w[k] * *s;
                }
            }
        }
    }
    out
}

/// Bicubic resize to the given output dimensions. Output is not clipped.
pub fn bicubic_resize(input: &ImageTensor, out_height: usize, out_width: usize) -> Result<ImageTensor> {
    if out_height == 0 || out_width == 0 {
        return Err(Error::Config(format!(
            "bicubic resize to degenerate {}x{}",
            out_height, out_width
        )));
    }
    let row_taps = tap_table(input.height(), out_height);
    let col_taps = tap_table(input.width(), out_width);
    Ok(resample_cols(&resample_rows(input, &row_taps), &col_taps))
}

/// Transpose of [`bicubic_resize`]: maps a gradient at `(out_h, out_w)` back
/// to the input resolution `(in_h, in_w)`.
pub fn bicubic_resize_grad(
    upstream: &ImageTensor,
    in_height: usize,
    in_width: usize,
) -> Result<ImageTensor> {
    if in_height == 0 || in_width == 0 {
        return Err(Error::Config(format!(
            "bicubic grad to degenerate {}x{}",
            in_height, in_width
        )));
    }
    let row_taps = tap_table(in_height, upstream.height());
    let col_taps = tap_table(in_width, upstream.width());
    // Forward is rows then cols, so the transpose runs cols then rows.
    Ok(scatter_rows(
        &scatter_cols(upstream, &col_taps, in_width),
        &row_taps,
        in_height,
    ))
}
