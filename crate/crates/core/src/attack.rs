//! Iterative signed-gradient attacks on SR models.
//!
//! Four procedures share one update rule: the basic whole-image attack, the
//! image-agnostic universal perturbation, the mask-restricted partial
//! attack, and the targeted attack. The deterioration objective is the
//! Euclidean norm of the SR residual against a reference output; updates
//! step by `alpha/T` along the gradient sign, clip the iterate to `[0, 1]`,
//! and re-anchor the perturbation inside the `[-alpha, alpha]` box around
//! the original image.
//!
//! The objective's gradient vanishes at the starting point (the residual is
//! zero there), so untargeted attacks seed iteration 0 with per-element
//! uniform noise in `[-alpha/T, alpha/T]` drawn from the config seed.

use crate::error::{Error, Result};
use crate::model::SRModel;
use crate::tensor::ImageTensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// Attack budget and schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    /// ℓ∞ budget in `[0, 1]`; canonical values are `k/255`.
    pub alpha: f64,
    /// Iteration count `T`.
    pub iterations: usize,
    /// Seed for the zero-gradient start.
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            alpha: 8.0 / 255.0,
            iterations: 50,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn new(alpha: f64, iterations: usize, seed: u64) -> Self {
        Self {
            alpha,
            iterations,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iteration count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Binary perturbation mask at LR resolution plus its HR counterpart,
/// `M_H[y, x] = M[y/s, x/s]` (nearest-neighbor upscale).
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    lr: ImageTensor,
    hr: ImageTensor,
    scale: usize,
}

impl Mask {
    /// Wraps a single-channel binary LR mask and derives the HR counterpart.
    pub fn from_lr(lr: ImageTensor, scale: usize) -> Result<Self> {
        if lr.channels() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "mask must have 1 channel, got {}",
                lr.channels()
            )));
        }
        if scale == 0 {
            return Err(Error::Config("mask scale must be >= 1".into()));
        }
        if lr.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Config("mask elements must be exactly 0 or 1".into()));
        }
        let mut hr = ImageTensor::zeros(1, lr.height() * scale, lr.width() * scale);
        for y in 0..hr.height() {
            let src = lr.row(0, y / scale);
            let dst = hr.row_mut(0, y);
            for (x, v) in dst.iter_mut().enumerate() {
                *v = src[x / scale];
            }
        }
        Ok(Self { lr, hr, scale })
    }

    /// Central-quarter mask: 1 iff `⌊w/4⌋ <= x < ⌊3w/4⌋` and
    /// `⌊h/4⌋ <= y < ⌊3h/4⌋`.
    pub fn center(height: usize, width: usize, scale: usize) -> Result<Self> {
        if height < 4 || width < 4 {
            return Err(Error::Config(format!(
                "center mask needs dims >= 4, got {}x{}",
                height, width
            )));
        }
        let (y0, y1) = (height / 4, 3 * height / 4);
        let (x0, x1) = (width / 4, 3 * width / 4);
        let mut lr = ImageTensor::zeros(1, height, width);
        for y in y0..y1 {
            for v in &mut lr.row_mut(0, y)[x0..x1] {
                *v = 1.0;
            }
        }
        Self::from_lr(lr, scale)
    }

    pub fn lr(&self) -> &ImageTensor {
        &self.lr
    }

    pub fn hr(&self) -> &ImageTensor {
        &self.hr
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    /// Number of LR pixels under attack.
    pub fn ones_count(&self) -> usize {
        self.lr.data().iter().filter(|&&v| v == 1.0).count()
    }

    /// `1 - M_H`, the HR weighting of the partial-attack loss.
    pub fn hr_complement(&self) -> ImageTensor {
        self.hr.map(|v| 1.0 - v)
    }
}

/// Output of one attack run.
#[derive(Debug, Clone)]
pub struct AdversarialResult {
    /// The adversarial image `X`, inside `[0, 1]` and within the ℓ∞ box.
    pub image: ImageTensor,
    /// `X - X₀`.
    pub perturbation: ImageTensor,
    /// Objective value after each iteration.
    pub loss_trace: Vec<f64>,
    pub config: AttackConfig,
}

/// Deterioration objective `L(X, X_ref) = ||f(X) - f(X_ref)||₂`.
pub fn attack_loss(model: &SRModel, x: &ImageTensor, x_ref: &ImageTensor) -> Result<f64> {
    x.check_same_shape(x_ref, "attack loss inputs")?;
    let f_ref = model.forward(x_ref)?;
    Ok(model.forward(x)?.sub(&f_ref).l2_norm())
}

/// Gradient of [`attack_loss`] with respect to `X`:
/// `∇L = Jᵀ (r / ||r||₂)` with `r = f(X) - f(X_ref)`, defined as the zero
/// tensor when `||r||₂ = 0`.
pub fn attack_loss_gradient(
    model: &SRModel,
    x: &ImageTensor,
    x_ref: &ImageTensor,
) -> Result<ImageTensor> {
    x.check_same_shape(x_ref, "attack loss inputs")?;
    let f_ref = model.forward(x_ref)?;
    let (_, grad) = loss_and_grad(model, x, &f_ref, None)?;
    Ok(grad)
}

/// Loss and input gradient against a precomputed reference SR output,
/// optionally weighting the residual by a single-channel HR mask.
fn loss_and_grad(
    model: &SRModel,
    x: &ImageTensor,
    f_ref: &ImageTensor,
    residual_weight: Option<&ImageTensor>,
) -> Result<(f64, ImageTensor)> {
    let (out, ctxs) = model.forward_ctx(x)?;
    if !out.same_shape(f_ref) {
        return Err(Error::ShapeMismatch(format!(
            "model output {:?} vs reference {:?}",
            out.shape(),
            f_ref.shape()
        )));
    }
    let mut r = out.sub(f_ref);
    if let Some(w) = residual_weight {
        r = r.mul_mask(w)?;
    }
    let norm = r.l2_norm();
    if norm == 0.0 {
        let (c, h, w) = x.shape();
        return Ok((0.0, ImageTensor::zeros(c, h, w)));
    }
    let grad = model.backward(&ctxs, r.scale(1.0 / norm), None)?;
    Ok((norm, grad))
}

fn check_unit_range(x: &ImageTensor, what: &str) -> Result<()> {
    if x.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Config(format!("{} has values outside [0, 1]", what)));
    }
    Ok(())
}

/// Per-element uniform noise in `[-bound, bound]`.
fn uniform_noise(shape: (usize, usize, usize), bound: f64, rng: &mut ChaCha12Rng) -> ImageTensor {
    let (c, h, w) = shape;
    if bound == 0.0 {
        return ImageTensor::zeros(c, h, w);
    }
    let data = (0..c * h * w)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    ImageTensor::from_vec(c, h, w, data).expect("shape consistent")
}

/// `clip_{-alpha,alpha}(x - x0) + x0`, evaluated so the recomputed
/// difference never exceeds the budget: rounding `x0 + alpha` can overshoot
/// by one ulp, in which case the element is nudged back toward the anchor.
fn reanchor(x: &ImageTensor, x0: &ImageTensor, alpha: f64) -> ImageTensor {
    let mut out = x.clone();
    for (v, &anchor) in out.data_mut().iter_mut().zip(x0.data()) {
        let d = (*v - anchor).clamp(-alpha, alpha);
        let mut nv = anchor + d;
        while (nv - anchor).abs() > alpha {
            nv = if nv > anchor {
                f64::next_down(nv)
            } else {
                f64::next_up(nv)
            };
        }
        *v = nv;
    }
    out
}

fn run_untargeted(
    model: &SRModel,
    x0: &ImageTensor,
    mask: Option<&Mask>,
    config: &AttackConfig,
) -> Result<AdversarialResult> {
    config.validate()?;
    check_unit_range(x0, "attack input")?;
    if let Some(m) = mask {
        if m.lr().height() != x0.height() || m.lr().width() != x0.width() {
            return Err(Error::ShapeMismatch(format!(
                "mask {}x{} vs image {}x{}",
                m.lr().height(),
                m.lr().width(),
                x0.height(),
                x0.width()
            )));
        }
        if m.scale() != model.scale() {
            return Err(Error::Config(format!(
                "mask built for scale {}, model has scale {}",
                m.scale(),
                model.scale()
            )));
        }
    }

    let f0 = model.forward(x0)?;
    let weight = mask.map(Mask::hr_complement);
    let step = config.alpha / config.iterations as f64;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);

    // Iteration 0: seeded start, restricted to the mask when present.
    let mut noise = uniform_noise(x0.shape(), step, &mut rng);
    if let Some(m) = mask {
        noise = noise.mul_mask(m.lr())?;
    }
    let mut x = reanchor(&x0.add(&noise).clip(0.0, 1.0), x0, config.alpha);

    let mut trace = Vec::with_capacity(config.iterations);
    let (loss, mut grad) = loss_and_grad(model, &x, &f0, weight.as_ref())?;
    trace.push(loss);

    for _ in 1..config.iterations {
        let mut dir = grad.sign().scale(step);
        if let Some(m) = mask {
            dir = dir.mul_mask(m.lr())?;
        }
        x = reanchor(&x.add(&dir).clip(0.0, 1.0), x0, config.alpha);
        let (loss, g) = loss_and_grad(model, &x, &f0, weight.as_ref())?;
        grad = g;
        trace.push(loss);
    }

    Ok(AdversarialResult {
        perturbation: x.sub(x0),
        image: x,
        loss_trace: trace,
        config: config.clone(),
    })
}

/// Basic whole-image attack.
pub fn ifgsm_basic(
    model: &SRModel,
    x0: &ImageTensor,
    config: &AttackConfig,
) -> Result<AdversarialResult> {
    run_untargeted(model, x0, None, config)
}

/// Partial attack: the update is restricted to the mask, and the objective
/// measures deterioration only on the complementary HR region `1 - M_H`.
pub fn partial_attack(
    model: &SRModel,
    x0: &ImageTensor,
    mask: &Mask,
    config: &AttackConfig,
) -> Result<AdversarialResult> {
    run_untargeted(model, x0, Some(mask), config)
}

/// Targeted attack: descends `||f(X) - f(X*)||₂` toward the LR target's SR
/// output. No seed step is needed because the gradient at `X₀` is already
/// nonzero whenever the targets differ; when it never improves, the
/// best-loss iterate (including `X₀`) is returned.
pub fn targeted_attack(
    model: &SRModel,
    x0: &ImageTensor,
    x_target: &ImageTensor,
    config: &AttackConfig,
) -> Result<AdversarialResult> {
    config.validate()?;
    x0.check_same_shape(x_target, "targeted attack input vs target")?;
    check_unit_range(x0, "attack input")?;

    let f_target = model.forward(x_target)?;
    let step = config.alpha / config.iterations as f64;

    let mut x = x0.clone();
    let (initial_loss, mut grad) = loss_and_grad(model, &x, &f_target, None)?;
    let mut best_loss = initial_loss;
    let mut best = x.clone();
    let mut trace = Vec::with_capacity(config.iterations);

    for _ in 0..config.iterations {
        let dir = grad.sign().scale(step);
        x = reanchor(&x.sub(&dir).clip(0.0, 1.0), x0, config.alpha);
        let (loss, g) = loss_and_grad(model, &x, &f_target, None)?;
        grad = g;
        trace.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best = x.clone();
        }
    }

    Ok(AdversarialResult {
        perturbation: best.sub(x0),
        image: best,
        loss_trace: trace,
        config: config.clone(),
    })
}

/// An image-agnostic perturbation trained over a set of center crops.
#[derive(Debug, Clone)]
pub struct UniversalPerturbation {
    /// `Δ` with `||Δ||∞ <= alpha`, shaped like the crop.
    pub delta: ImageTensor,
    /// Mean objective over the crop set after each iteration.
    pub loss_trace: Vec<f64>,
    pub config: AttackConfig,
}

/// Universal attack: maximizes the mean deterioration
/// `F(Δ) = (1/K) Σ_k L(clip_{0,1}(X₀ᵏ + Δ), X₀ᵏ)` over the center crops of
/// the given images. Gradient contributions are zeroed where the `[0, 1]`
/// clip binds, and per-image gradients are averaged in index order.
pub fn universal_attack(
    model: &SRModel,
    images: &[ImageTensor],
    crop_h: usize,
    crop_w: usize,
    config: &AttackConfig,
) -> Result<UniversalPerturbation> {
    config.validate()?;
    if images.is_empty() {
        return Err(Error::EmptyDataset("universal attack needs images".into()));
    }
    let channels = images[0].channels();
    let mut crops = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        if img.channels() != channels {
            return Err(Error::ShapeMismatch(format!(
                "image {} has {} channels, expected {}",
                i,
                img.channels(),
                channels
            )));
        }
        check_unit_range(img, "universal attack input")?;
        if img.height() < crop_h || img.width() < crop_w {
            return Err(Error::ShapeMismatch(format!(
                "image {} ({}x{}) smaller than crop {}x{}",
                i,
                img.height(),
                img.width(),
                crop_h,
                crop_w
            )));
        }
        crops.push(img.center_crop(crop_h, crop_w)?);
    }
    let clean_sr: Vec<ImageTensor> = crops
        .iter()
        .map(|c| model.forward(c))
        .collect::<Result<_>>()?;

    let step = config.alpha / config.iterations as f64;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);

    // Δ₀ = 0 has zero gradient, so iteration 0 seeds with the same
    // small-uniform rule as the basic attack.
    let noise = uniform_noise((channels, crop_h, crop_w), step, &mut rng);
    let mut delta = noise.clip(-config.alpha, config.alpha);

    let mut trace = Vec::with_capacity(config.iterations);
    let (loss, mut grad) = universal_eval(model, &crops, &clean_sr, &delta)?;
    trace.push(loss);

    for _ in 1..config.iterations {
        delta = delta
            .add(&grad.sign().scale(step))
            .clip(-config.alpha, config.alpha);
        let (loss, g) = universal_eval(model, &crops, &clean_sr, &delta)?;
        grad = g;
        trace.push(loss);
    }

    Ok(UniversalPerturbation {
        delta,
        loss_trace: trace,
        config: config.clone(),
    })
}

fn universal_eval(
    model: &SRModel,
    crops: &[ImageTensor],
    clean_sr: &[ImageTensor],
    delta: &ImageTensor,
) -> Result<(f64, ImageTensor)> {
    let per_image: Vec<(f64, ImageTensor)> = crops
        .par_iter()
        .zip(clean_sr.par_iter())
        .map(|(crop, f0)| -> Result<(f64, ImageTensor)> {
            let unclipped = crop.add(delta);
            let x = unclipped.clip(0.0, 1.0);
            let (loss, mut grad) = loss_and_grad(model, &x, f0, None)?;
            // The clip has zero derivative wherever it binds.
            for (g, (&u, &c)) in grad
                .data_mut()
                .iter_mut()
                .zip(unclipped.data().iter().zip(x.data()))
            {
                if u != c {
                    *g = 0.0;
                }
            }
            Ok((loss, grad))
        })
        .collect::<Result<_>>()?;

    // Fixed index-order reduction keeps the result deterministic under
    // any parallel schedule.
    let k = crops.len() as f64;
    let mut mean_loss = 0.0;
    let mut mean_grad = ImageTensor::zeros(delta.channels(), delta.height(), delta.width());
    for (loss, grad) in &per_image {
        mean_loss += loss;
        mean_grad.add_assign(grad);
    }
    Ok((mean_loss / k, mean_grad.scale(1.0 / k)))
}

/// Applies a universal perturbation to the center region of an image:
/// that region becomes `clip_{0,1}(region + Δ)`, the rest is untouched.
pub fn apply_universal(image: &ImageTensor, delta: &ImageTensor) -> Result<ImageTensor> {
    if delta.channels() != image.channels()
        || delta.height() > image.height()
        || delta.width() > image.width()
    {
        return Err(Error::ShapeMismatch(format!(
            "perturbation {:?} does not fit image {:?}",
            delta.shape(),
            image.shape()
        )));
    }
    let y0 = (image.height() - delta.height()) / 2;
    let x0 = (image.width() - delta.width()) / 2;
    let region = image.crop(y0, x0, delta.height(), delta.width())?;
    let perturbed = region.add(delta).clip(0.0, 1.0);
    let mut out = image.clone();
    out.paste(&perturbed, y0, x0)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_bicubic_model, build_micro_edsr, MicroEdsrConfig};
    use crate::ops::{finite_diff_gradient, relative_error};
    use crate::resize::{bicubic_resize, bicubic_resize_grad};
    use rand::Rng;
    use rand::SeedableRng;

    fn random_image(c: usize, h: usize, w: usize, seed: u64) -> ImageTensor {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data = (0..c * h * w).map(|_| rng.random_range(0.0..1.0)).collect();
        ImageTensor::from_vec(c, h, w, data).unwrap()
    }

    /// Random image bounded away from 0 and 1 so clips never bind.
    fn interior_image(c: usize, h: usize, w: usize, seed: u64) -> ImageTensor {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data = (0..c * h * w).map(|_| rng.random_range(0.25..0.75)).collect();
        ImageTensor::from_vec(c, h, w, data).unwrap()
    }

    fn tiny_model(seed: u64) -> SRModel {
        build_micro_edsr(
            &MicroEdsrConfig {
                channels: 4,
                blocks: 1,
                ..MicroEdsrConfig::default()
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn loss_zero_at_reference() {
        let model = tiny_model(1);
        let x = random_image(3, 6, 6, 2);
        assert_eq!(attack_loss(&model, &x, &x).unwrap(), 0.0);
    }

    #[test]
    fn loss_by_linearity_on_bicubic() {
        let model = build_bicubic_model(4).unwrap();
        let x0 = random_image(3, 6, 6, 3);
        let delta = random_image(3, 6, 6, 4).scale(0.01);
        let x = x0.add(&delta);
        let loss = attack_loss(&model, &x, &x0).unwrap();
        let expect = bicubic_resize(&delta, 24, 24).unwrap().l2_norm();
        assert!((loss - expect).abs() < 1e-9);
    }

    #[test]
    fn loss_zero_weight_model() {
        let mut model = tiny_model(5);
        for k in model.kernels_mut() {
            k.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let a = random_image(3, 2, 2, 6);
        let b = random_image(3, 2, 2, 7);
        assert_eq!(attack_loss(&model, &a, &b).unwrap(), 0.0);
    }

    #[test]
    fn loss_gradient_zero_at_reference() {
        let model = tiny_model(8);
        let x = random_image(3, 6, 6, 9);
        let g = attack_loss_gradient(&model, &x, &x).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_gradient_analytic_on_bicubic() {
        let model = build_bicubic_model(4).unwrap();
        let x0 = random_image(3, 5, 5, 10);
        let x = x0.add(&random_image(3, 5, 5, 11).scale(0.02));
        let g = attack_loss_gradient(&model, &x, &x0).unwrap();

        let r = bicubic_resize(&x.sub(&x0), 20, 20).unwrap();
        let expect = bicubic_resize_grad(&r.scale(1.0 / r.l2_norm()), 5, 5).unwrap();
        assert!(g.sub(&expect).linf_norm() < 1e-12);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let model = tiny_model(12);
        let x0 = random_image(3, 6, 6, 13);
        let x = x0.add(&random_image(3, 6, 6, 14).scale(0.05)).clip(0.0, 1.0);
        let analytic = attack_loss_gradient(&model, &x, &x0).unwrap();
        let numeric = finite_diff_gradient(
            |t| attack_loss(&model, t, &x0).unwrap(),
            &x,
            1e-5,
        );
        assert!(
            relative_error(&analytic, &numeric) < 1e-3,
            "rel err {}",
            relative_error(&analytic, &numeric)
        );
    }

    #[test]
    fn basic_zero_alpha_returns_input() {
        let model = tiny_model(15);
        let x0 = random_image(3, 6, 6, 16);
        let config = AttackConfig::new(0.0, 5, 1);
        let result = ifgsm_basic(&model, &x0, &config).unwrap();
        assert_eq!(result.image, x0);
        assert!(result.perturbation.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn basic_single_gradient_step_on_bicubic() {
        // From a seeded interior start, the next update must equal a
        // (alpha/T)-sized signed step of the analytic bicubic gradient.
        let model = build_bicubic_model(4).unwrap();
        let x0 = interior_image(3, 6, 6, 17);
        let config = AttackConfig::new(8.0 / 255.0, 2, 3);
        let result = ifgsm_basic(&model, &x0, &config).unwrap();

        // Reproduce the seeded first iterate.
        let step = config.alpha / 2.0;
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        let noise = uniform_noise(x0.shape(), step, &mut rng);
        let x1 = reanchor(&x0.add(&noise).clip(0.0, 1.0), &x0, config.alpha);

        // Analytic gradient: B^T(r/||r||) with r the SR residual.
        let r = bicubic_resize(&x1, 24, 24)
            .unwrap()
            .sub(&bicubic_resize(&x0, 24, 24).unwrap());
        let g = bicubic_resize_grad(&r.scale(1.0 / r.l2_norm()), 6, 6).unwrap();
        let expect = reanchor(
            &x1.add(&g.sign().scale(step)).clip(0.0, 1.0),
            &x0,
            config.alpha,
        );
        assert_eq!(result.image, expect);
    }

    #[test]
    fn attack_invariants_hold() {
        let model = tiny_model(18);
        let x0 = random_image(3, 8, 8, 19);
        let config = AttackConfig::new(8.0 / 255.0, 10, 4);
        let result = ifgsm_basic(&model, &x0, &config).unwrap();
        assert!(result.perturbation.linf_norm() <= config.alpha + 1e-12);
        assert!(result
            .image
            .data()
            .iter()
            .all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(result.loss_trace.len(), config.iterations);
    }

    #[test]
    fn attack_is_deterministic() {
        let model = tiny_model(20);
        let x0 = random_image(3, 8, 8, 21);
        let config = AttackConfig::new(4.0 / 255.0, 6, 9);
        let a = ifgsm_basic(&model, &x0, &config).unwrap();
        let b = ifgsm_basic(&model, &x0, &config).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn bicubic_loss_never_drops_below_seed() {
        let model = build_bicubic_model(4).unwrap();
        let x0 = interior_image(3, 8, 8, 22);
        let config = AttackConfig::new(8.0 / 255.0, 12, 5);
        let result = ifgsm_basic(&model, &x0, &config).unwrap();
        assert!(result.loss_trace.last().unwrap() >= &result.loss_trace[0]);
    }

    #[test]
    fn center_mask_hand_counts() {
        let m8 = Mask::center(8, 8, 4).unwrap();
        assert_eq!(m8.ones_count(), 16);
        for y in 0..8 {
            for x in 0..8 {
                let expect = (2..6).contains(&y) && (2..6).contains(&x);
                assert_eq!(m8.lr().get(0, y, x) == 1.0, expect);
            }
        }

        let m4 = Mask::center(4, 4, 4).unwrap();
        assert_eq!(m4.ones_count(), 4);
        for y in 0..4 {
            for x in 0..4 {
                let expect = (1..3).contains(&y) && (1..3).contains(&x);
                assert_eq!(m4.lr().get(0, y, x) == 1.0, expect);
            }
        }

        let m100 = Mask::center(100, 100, 4).unwrap();
        assert_eq!(m100.ones_count(), 2500);
    }

    #[test]
    fn center_mask_degenerate_dims() {
        assert!(Mask::center(3, 8, 4).is_err());
        assert!(Mask::center(8, 2, 4).is_err());
    }

    #[test]
    fn mask_hr_is_nearest_neighbor() {
        let mut lr = ImageTensor::zeros(1, 2, 2);
        lr.set(0, 0, 1, 1.0);
        let mask = Mask::from_lr(lr, 2).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let expect = if y < 2 && x >= 2 { 1.0 } else { 0.0 };
                assert_eq!(mask.hr().get(0, y, x), expect);
            }
        }
    }

    #[test]
    fn mask_rejects_non_binary() {
        let lr = ImageTensor::filled(1, 4, 4, 0.5);
        assert!(Mask::from_lr(lr, 4).is_err());
    }

    #[test]
    fn partial_support_is_inside_mask() {
        let model = tiny_model(23);
        let x0 = random_image(3, 8, 8, 24);
        let mask = Mask::center(8, 8, 4).unwrap();
        let config = AttackConfig::new(8.0 / 255.0, 8, 6);
        let result = partial_attack(&model, &x0, &mask, &config).unwrap();
        for c in 0..3 {
            for y in 0..8 {
                for x in 0..8 {
                    if mask.lr().get(0, y, x) == 0.0 {
                        assert_eq!(result.image.get(c, y, x), x0.get(c, y, x));
                    }
                }
            }
        }
        assert!(result.perturbation.linf_norm() <= config.alpha + 1e-12);
    }

    #[test]
    fn partial_all_zero_mask_is_identity() {
        let model = tiny_model(25);
        let x0 = random_image(3, 8, 8, 26);
        let mask = Mask::from_lr(ImageTensor::zeros(1, 8, 8), 4).unwrap();
        let config = AttackConfig::new(8.0 / 255.0, 5, 7);
        let result = partial_attack(&model, &x0, &mask, &config).unwrap();
        assert_eq!(result.image, x0);
    }

    #[test]
    fn partial_all_ones_mask_freezes_after_seed() {
        // With M = 1 everywhere the loss weight (1 - M_H) vanishes, so the
        // objective is identically zero and only the seed step moves X.
        let model = tiny_model(27);
        let x0 = random_image(3, 8, 8, 28);
        let mask = Mask::from_lr(ImageTensor::filled(1, 8, 8, 1.0), 4).unwrap();
        let config = AttackConfig::new(8.0 / 255.0, 6, 8);
        let result = partial_attack(&model, &x0, &mask, &config).unwrap();
        let seed_bound = config.alpha / config.iterations as f64;
        assert!(result.perturbation.linf_norm() <= seed_bound + 1e-15);
        assert!(result.loss_trace.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn partial_bicubic_outer_support_within_kernel_reach() {
        // For the linear bicubic model the outer residual is B(Δ∘M); each SR
        // pixel reads a 4-tap LR window, so the residual dies out within
        // 2·scale pixels of the mask boundary.
        let scale = 4;
        let model = build_bicubic_model(scale).unwrap();
        let x0 = interior_image(3, 12, 12, 29);
        let mask = Mask::center(12, 12, scale).unwrap();
        let config = AttackConfig::new(16.0 / 255.0, 6, 10);
        let result = partial_attack(&model, &x0, &mask, &config).unwrap();

        let f0 = model.forward(&x0).unwrap();
        let fx = model.forward(&result.image).unwrap();
        let residual = fx.sub(&f0);

        // LR mask is rows/cols 3..9; taps reach 2 LR pixels, so HR pixels
        // with source-window distance > 2 from the mask must be untouched.
        for y in 0..48 {
            for x in 0..48 {
                let src_y = (y as f64 + 0.5) / scale as f64 - 0.5;
                let src_x = (x as f64 + 0.5) / scale as f64 - 0.5;
                let reach = |s: f64, lo: f64, hi: f64| {
                    let lo_tap = s.floor() - 1.0;
                    let hi_tap = s.floor() + 2.0;
                    hi_tap >= lo && lo_tap <= hi
                };
                let touches = reach(src_y, 3.0, 8.0) && reach(src_x, 3.0, 8.0);
                if !touches {
                    for c in 0..3 {
                        assert_eq!(
                            residual.get(c, y, x),
                            0.0,
                            "unexpected bleed at ({}, {}, {})",
                            c,
                            y,
                            x
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn targeted_same_target_is_noop() {
        let model = tiny_model(30);
        let x0 = random_image(3, 6, 6, 31);
        let config = AttackConfig::new(16.0 / 255.0, 5, 11);
        let result = targeted_attack(&model, &x0, &x0, &config).unwrap();
        assert_eq!(result.image, x0);
        assert!(result.loss_trace.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn targeted_zero_alpha_is_noop() {
        let model = tiny_model(32);
        let x0 = random_image(3, 6, 6, 33);
        let target = random_image(3, 6, 6, 34);
        let config = AttackConfig::new(0.0, 5, 12);
        let result = targeted_attack(&model, &x0, &target, &config).unwrap();
        assert_eq!(result.image, x0);
    }

    #[test]
    fn targeted_descends_on_linear_model() {
        // Keep the target well beyond the total budget T·(alpha/T) = alpha
        // so no pixel reaches its optimum and starts oscillating.
        let model = build_bicubic_model(4).unwrap();
        let x0 = interior_image(3, 8, 8, 35);
        let delta = random_image(3, 8, 8, 36).map(|v| if v > 0.5 { 0.2 } else { -0.2 });
        let target = x0.add(&delta).clip(0.0, 1.0);
        let config = AttackConfig::new(16.0 / 255.0, 10, 13);

        let before = attack_loss(&model, &x0, &target).unwrap();
        let result = targeted_attack(&model, &x0, &target, &config).unwrap();
        let after = attack_loss(&model, &result.image, &target).unwrap();
        assert!(after < before, "{} !< {}", after, before);
        // Loss decreases monotonically on the linear model.
        let mut prev = before;
        for &l in &result.loss_trace {
            assert!(l <= prev + 1e-9, "{} > {}", l, prev);
            prev = l;
        }
    }

    #[test]
    fn universal_zero_alpha_is_zero() {
        let model = tiny_model(37);
        let images = vec![random_image(3, 8, 8, 38), random_image(3, 8, 8, 39)];
        let config = AttackConfig::new(0.0, 4, 14);
        let result = universal_attack(&model, &images, 6, 6, &config).unwrap();
        assert!(result.delta.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn universal_matches_basic_for_single_interior_image() {
        // K = 1 optimizes the same objective with the same update, so on an
        // interior image (where neither [0,1] clip ever binds) the two
        // trajectories coincide. The state representations differ (X vs Δ),
        // which costs a few ulps per iteration, hence the tight tolerance
        // instead of bit equality.
        let model = tiny_model(40);
        let image = interior_image(3, 8, 8, 41);
        let config = AttackConfig::new(8.0 / 255.0, 6, 15);

        let uni = universal_attack(&model, &[image.clone()], 8, 8, &config).unwrap();
        let basic = ifgsm_basic(&model, &image, &config).unwrap();

        assert!(uni.delta.sub(&basic.perturbation).linf_norm() < 1e-12);
        for (a, b) in uni.loss_trace.iter().zip(&basic.loss_trace) {
            assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn universal_mean_gradient_matches_per_image_average() {
        let model = build_bicubic_model(4).unwrap();
        let images: Vec<_> = (0..3).map(|i| interior_image(3, 8, 8, 50 + i)).collect();
        let crops: Vec<_> = images.iter().map(|im| im.center_crop(6, 6).unwrap()).collect();
        let clean: Vec<_> = crops.iter().map(|c| model.forward(c).unwrap()).collect();
        let delta = interior_image(3, 6, 6, 60).map(|v| (v - 0.5) * 0.02);

        let (_, mean_grad) = universal_eval(&model, &crops, &clean, &delta).unwrap();
        let mut expect = ImageTensor::zeros(3, 6, 6);
        for (crop, f0) in crops.iter().zip(&clean) {
            let x = crop.add(&delta).clip(0.0, 1.0);
            let (_, g) = loss_and_grad(&model, &x, f0, None).unwrap();
            expect.add_assign(&g);
        }
        let expect = expect.scale(1.0 / 3.0);
        assert!(mean_grad.sub(&expect).linf_norm() < 1e-15);
    }

    #[test]
    fn universal_rejects_small_images() {
        let model = tiny_model(42);
        let images = vec![random_image(3, 4, 4, 43)];
        let config = AttackConfig::default();
        assert!(universal_attack(&model, &images, 8, 8, &config).is_err());
        assert!(universal_attack(&model, &[], 4, 4, &config).is_err());
    }

    #[test]
    fn apply_universal_identity_and_clip() {
        let image = random_image(3, 8, 8, 44);
        let zero = ImageTensor::zeros(3, 4, 4);
        assert_eq!(apply_universal(&image, &zero).unwrap(), image);

        let ones = ImageTensor::filled(3, 8, 8, 1.0);
        let delta = ImageTensor::filled(3, 8, 8, 8.0 / 255.0);
        assert_eq!(apply_universal(&ones, &delta).unwrap(), ones);
    }

    #[test]
    fn apply_universal_respects_budget() {
        let image = random_image(3, 9, 9, 45);
        let alpha = 8.0 / 255.0;
        let delta = random_image(3, 5, 5, 46).map(|v| (v - 0.5) * 2.0 * alpha);
        let out = apply_universal(&image, &delta).unwrap();
        assert!(out.sub(&image).linf_norm() <= alpha + 1e-12);
        assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
