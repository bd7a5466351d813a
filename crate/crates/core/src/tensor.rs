//! Planar image tensors.
//!
//! An [`ImageTensor`] stores a `(channels, height, width)` block of `f64`
//! values in channel-major order. Images nominally live in `[0, 1]`;
//! gradients and perturbations use the same container without the range
//! restriction. All arithmetic is `f64` so the finite-difference oracles
//! have headroom.

use crate::error::{Error, Result};

/// Planar floating-point image in `(C, H, W)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    /// All-zero tensor of the given shape.
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    /// Constant-valued tensor.
    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// Wraps an existing channel-major buffer.
    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "buffer of {} elements cannot hold {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        self.data[(c * self.height + y) * self.width + x] = value;
    }

    /// Contiguous row `(c, y, ..)`.
    #[inline]
    pub fn row(&self, c: usize, y: usize) -> &[f64] {
        let start = (c * self.height + y) * self.width;
        &self.data[start..start + self.width]
    }

    #[inline]
    pub fn row_mut(&mut self, c: usize, y: usize) -> &mut [f64] {
        let start = (c * self.height + y) * self.width;
        &mut self.data[start..start + self.width]
    }

    /// Contiguous channel plane.
    pub fn plane(&self, c: usize) -> &[f64] {
        let size = self.height * self.width;
        &self.data[c * size..(c + 1) * size]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}: {:?} vs {:?}",
                what,
                self.shape(),
                other.shape()
            )))
        }
    }

    /// Elementwise map into a new tensor.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two same-shape tensors.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(self.same_shape(other));
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (d, s) in self.data.iter_mut().zip(&other.data) {
            *d += *s;
        }
    }

    /// `clip_{lo,hi}` applied elementwise.
    pub fn clip(&self, lo: f64, hi: f64) -> Self {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Elementwise sign with `sgn(0) = 0`.
    pub fn sign(&self) -> Self {
        self.map(|v| {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn linf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Multiplies each channel by a single-channel mask of the same spatial size.
    pub fn mul_mask(&self, mask: &ImageTensor) -> Result<Self> {
        if mask.channels != 1 || mask.height != self.height || mask.width != self.width {
            return Err(Error::ShapeMismatch(format!(
                "mask {:?} does not cover image {:?}",
                mask.shape(),
                self.shape()
            )));
        }
        let mut out = self.clone();
        for c in 0..self.channels {
            for y in 0..self.height {
                let m = mask.row(0, y);
                for (v, &w) in out.row_mut(c, y).iter_mut().zip(m) {
                    *v *= w;
                }
            }
        }
        Ok(out)
    }

    /// Copies a spatial window into a new tensor.
    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Self> {
        if y0 + height > self.height || x0 + width > self.width {
            return Err(Error::ShapeMismatch(format!(
                "crop {}x{} at ({}, {}) exceeds {}x{}",
                height, width, y0, x0, self.height, self.width
            )));
        }
        let mut out = Self::zeros(self.channels, height, width);
        for c in 0..self.channels {
            for y in 0..height {
                let src = &self.row(c, y0 + y)[x0..x0 + width];
                out.row_mut(c, y).copy_from_slice(src);
            }
        }
        Ok(out)
    }

    /// Center crop of the given size.
    pub fn center_crop(&self, height: usize, width: usize) -> Result<Self> {
        if height > self.height || width > self.width {
            return Err(Error::ShapeMismatch(format!(
                "center crop {}x{} exceeds image {}x{}",
                height, width, self.height, self.width
            )));
        }
        self.crop(
            (self.height - height) / 2,
            (self.width - width) / 2,
            height,
            width,
        )
    }

    /// Writes `patch` back at the given offset.
    pub fn paste(&mut self, patch: &ImageTensor, y0: usize, x0: usize) -> Result<()> {
        if patch.channels != self.channels
            || y0 + patch.height > self.height
            || x0 + patch.width > self.width
        {
            return Err(Error::ShapeMismatch(format!(
                "paste of {:?} at ({}, {}) into {:?}",
                patch.shape(),
                y0,
                x0,
                self.shape()
            )));
        }
        for c in 0..self.channels {
            for y in 0..patch.height {
                let dst = &mut self.row_mut(c, y0 + y)[x0..x0 + patch.width];
                dst.copy_from_slice(patch.row(c, y));
            }
        }
        Ok(())
    }

    /// Rounds every element to the nearest 8-bit level: `q(x) = round(255 x) / 255`.
    pub fn quantize8(&self) -> Self {
        self.map(|v| (v * 255.0).round() / 255.0)
    }
}
