//! Desk-scale trainer for the micro SR models.
//!
//! Samples random HR patches, derives LR patches by bicubic downscale, and
//! minimizes mean squared reconstruction error with Adam. Per-patch
//! gradient evaluation runs in parallel; the batch reduction is a fixed
//! index-order sum so a given seed yields a bit-identical model.

use crate::error::{Error, Result};
use crate::model::{build_micro_edsr, MicroEdsrConfig, SRModel};
use crate::ops::ConvGrad;
use crate::resize::bicubic_resize;
use crate::tensor::ImageTensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// Hyperparameters for [`train_micro_model`].
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub steps: usize,
    /// HR patch edge length; must be divisible by the model scale.
    pub patch_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            patch_size: 96,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Trained model plus the per-step batch loss trace.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: SRModel,
    pub loss_trace: Vec<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

struct AdamState {
    m: Vec<ConvGrad>,
    v: Vec<ConvGrad>,
    step: usize,
}

impl AdamState {
    fn new(model: &SRModel) -> Self {
        Self {
            m: model.zero_grads(),
            v: model.zero_grads(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut SRModel, grads: &[ConvGrad], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for (idx, kernel) in model.kernels_mut().iter_mut().enumerate() {
            let g = &grads[idx];
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for ((w, gw), (mw, vw)) in kernel
                .weights
                .iter_mut()
                .zip(&g.weights)
                .zip(m.weights.iter_mut().zip(v.weights.iter_mut()))
            {
                *mw = BETA1 * *mw + (1.0 - BETA1) * gw;
                *vw = BETA2 * *vw + (1.0 - BETA2) * gw * gw;
                *w -= lr * (*mw / bc1) / ((*vw / bc2).sqrt() + EPS);
            }
            for ((b, gb), (mb, vb)) in kernel
                .bias
                .iter_mut()
                .zip(&g.bias)
                .zip(m.bias.iter_mut().zip(v.bias.iter_mut()))
            {
                *mb = BETA1 * *mb + (1.0 - BETA1) * gb;
                *vb = BETA2 * *vb + (1.0 - BETA2) * gb * gb;
                *b -= lr * (*mb / bc1) / ((*vb / bc2).sqrt() + EPS);
            }
        }
    }
}

/// Trains a micro model on a set of HR images.
///
/// The model is built from `config` with the same seed, so `steps = 0`
/// returns the freshly initialized model unchanged.
pub fn train_micro_model(
    config: &MicroEdsrConfig,
    hr_images: &[ImageTensor],
    opts: &TrainOptions,
) -> Result<TrainedModel> {
    config.validate()?;
    if hr_images.is_empty() {
        return Err(Error::EmptyDataset("no training images".into()));
    }
    if opts.patch_size == 0 || opts.patch_size % config.scale != 0 {
        return Err(Error::Config(format!(
            "patch size {} not divisible by scale {}",
            opts.patch_size, config.scale
        )));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    for (i, img) in hr_images.iter().enumerate() {
        if img.channels() != 3 {
            return Err(Error::Config(format!(
                "training image {} has {} channels, expected 3",
                i,
                img.channels()
            )));
        }
        if img.height() < opts.patch_size || img.width() < opts.patch_size {
            return Err(Error::Config(format!(
                "patch size {} larger than image {} ({}x{})",
                opts.patch_size,
                i,
                img.height(),
                img.width()
            )));
        }
    }

    let mut model = build_micro_edsr(config, opts.seed)?;
    let mut adam = AdamState::new(&model);
    let mut loss_trace = Vec::with_capacity(opts.steps);
    // Separate stream for patch sampling so it never aliases the init draw.
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);

    let lr_patch = opts.patch_size / config.scale;
    for _ in 0..opts.steps {
        let mut patches = Vec::with_capacity(opts.batch_size);
        for _ in 0..opts.batch_size {
            let img = &hr_images[rng.random_range(0..hr_images.len())];
            let y0 = rng.random_range(0..=img.height() - opts.patch_size);
            let x0 = rng.random_range(0..=img.width() - opts.patch_size);
            patches.push(img.crop(y0, x0, opts.patch_size, opts.patch_size)?);
        }

        let per_patch: Vec<Result<(f64, Vec<ConvGrad>)>> = patches
            .par_iter()
            .map(|hr| {
                let lr = bicubic_resize(hr, lr_patch, lr_patch)?;
                let (out, ctxs) = model.forward_ctx(&lr)?;
                let diff = out.sub(hr);
                let numel = diff.len() as f64;
                let loss = diff.data().iter().map(|v| v * v).sum::<f64>() / numel;
                let upstream = diff.scale(2.0 / numel);
                let mut grads = model.zero_grads();
                model.backward(&ctxs, upstream, Some(&mut grads))?;
                Ok((loss, grads))
            })
            .collect();

        let mut batch_loss = 0.0;
        let mut batch_grads = model.zero_grads();
        for item in per_patch {
            let (loss, grads) = item?;
            batch_loss += loss;
            for (acc, g) in batch_grads.iter_mut().zip(&grads) {
                acc.add_assign(g);
            }
        }
        let scale = 1.0 / opts.batch_size as f64;
        batch_loss *= scale;
        for g in &mut batch_grads {
            g.scale(scale);
        }

        adam.update(&mut model, &batch_grads, opts.learning_rate);
        loss_trace.push(batch_loss);
    }

    Ok(TrainedModel { model, loss_trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::psnr;
    use crate::synth::synth_photo;

    fn tiny_config() -> MicroEdsrConfig {
        MicroEdsrConfig {
            channels: 8,
            blocks: 2,
            ..MicroEdsrConfig::default()
        }
    }

    #[test]
    fn empty_dataset_is_error() {
        let r = train_micro_model(&tiny_config(), &[], &TrainOptions::default());
        assert!(matches!(r, Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn oversized_patch_is_error() {
        let imgs = vec![synth_photo(40, 40, 1)];
        let opts = TrainOptions {
            patch_size: 48,
            steps: 1,
            ..TrainOptions::default()
        };
        assert!(matches!(
            train_micro_model(&tiny_config(), &imgs, &opts),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_steps_returns_initialized_model() {
        let imgs = vec![synth_photo(48, 48, 2)];
        let opts = TrainOptions {
            steps: 0,
            patch_size: 32,
            seed: 11,
            ..TrainOptions::default()
        };
        let trained = train_micro_model(&tiny_config(), &imgs, &opts).unwrap();
        let fresh = build_micro_edsr(&tiny_config(), 11).unwrap();
        assert_eq!(trained.model.kernels(), fresh.kernels());
        assert!(trained.loss_trace.is_empty());
    }

    #[test]
    fn training_is_seed_deterministic() {
        let imgs: Vec<_> = (0..4).map(|i| synth_photo(48, 48, i)).collect();
        let opts = TrainOptions {
            steps: 5,
            patch_size: 24,
            batch_size: 4,
            seed: 3,
            ..TrainOptions::default()
        };
        let a = train_micro_model(&tiny_config(), &imgs, &opts).unwrap();
        let b = train_micro_model(&tiny_config(), &imgs, &opts).unwrap();
        assert_eq!(a.model.kernels(), b.model.kernels());
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    // The long-run convergence check: smoothed loss over the last 50-step
    // window must fall below half of the first window.
    #[test]
    fn loss_halves_over_training_run() {
        let imgs: Vec<_> = (0..16).map(|i| synth_photo(64, 64, 100 + i)).collect();
        let opts = TrainOptions {
            steps: 2000,
            patch_size: 32,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 7,
        };
        let trained = train_micro_model(&tiny_config(), &imgs, &opts).unwrap();
        let first: f64 = trained.loss_trace[..50].iter().sum::<f64>() / 50.0;
        let last: f64 = trained.loss_trace[opts.steps - 50..].iter().sum::<f64>() / 50.0;
        assert!(
            last < 0.5 * first,
            "first window {} vs last window {}",
            first,
            last
        );
    }

    #[test]
    fn trained_beats_zero_model_on_held_out_image() {
        let imgs: Vec<_> = (0..8).map(|i| synth_photo(48, 48, 200 + i)).collect();
        let opts = TrainOptions {
            steps: 300,
            patch_size: 32,
            batch_size: 8,
            seed: 5,
            ..TrainOptions::default()
        };
        let trained = train_micro_model(&tiny_config(), &imgs, &opts).unwrap();

        let held_out = synth_photo(48, 48, 999);
        let lr = bicubic_resize(&held_out, 12, 12).unwrap();
        let sr = trained.model.forward(&lr).unwrap().clip(0.0, 1.0);
        let psnr_trained = psnr(&held_out, &sr).unwrap();

        let mut zero = build_micro_edsr(&tiny_config(), 5).unwrap();
        for k in zero.kernels_mut() {
            k.weights.iter_mut().for_each(|w| *w = 0.0);
            k.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let sr_zero = zero.forward(&lr).unwrap().clip(0.0, 1.0);
        let psnr_zero = psnr(&held_out, &sr_zero).unwrap();
        assert!(
            psnr_trained > psnr_zero,
            "trained {} dB vs zero {} dB",
            psnr_trained,
            psnr_zero
        );
    }
}
