//! Procedural photo-like test imagery.
//!
//! Seeded generator producing shaded backgrounds, hard-edged objects,
//! striped texture, and thin strokes. The texture motifs are drawn from a
//! small family (few stripe frequencies, consistent contrast) so a
//! desk-scale SR model can actually learn to restore them; that learned
//! sharpening is what the attack and robustness measurements probe. Real
//! datasets are ingested through [`crate::eval::load_image_dir`].

use crate::resize::bicubic_resize;
use crate::tensor::ImageTensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::f64::consts::PI;

/// Stripe wavelengths in HR pixels. They survive a 4x downscale in
/// attenuated form, so restoring them requires genuine gain.
const STRIPE_PERIODS: [f64; 2] = [9.0, 13.0];

/// Generates a 3-channel image in `[0, 1]`, quantized to 8-bit levels.
pub fn synth_photo(height: usize, width: usize, seed: u64) -> ImageTensor {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut img = ImageTensor::filled(3, height, width, 0.5);

    // Oriented low-frequency shading, correlated across channels.
    let n_waves = rng.random_range(2..=3);
    for _ in 0..n_waves {
        let fy = rng.random_range(-1.5..1.5);
        let fx = rng.random_range(-1.5..1.5);
        let phase = rng.random_range(0.0..2.0 * PI);
        let amp = rng.random_range(0.05..0.12);
        let tint: [f64; 3] = [
            rng.random_range(0.6..1.0),
            rng.random_range(0.6..1.0),
            rng.random_range(0.6..1.0),
        ];
        for c in 0..3 {
            for y in 0..height {
                let ky = 2.0 * PI * fy * y as f64 / height as f64;
                for (x, v) in img.row_mut(c, y).iter_mut().enumerate() {
                    let kx = 2.0 * PI * fx * x as f64 / width as f64;
                    *v += amp * tint[c] * (ky + kx + phase).sin();
                }
            }
        }
    }

    // Smooth blotchy shading: a tiny random grid upsampled bicubically.
    for c in 0..3 {
        let cell = 6.max(height.min(width) / 8);
        let grid_h = (height / cell).max(2);
        let grid_w = (width / cell).max(2);
        let data = (0..grid_h * grid_w)
            .map(|_| rng.random_range(-0.08..0.08))
            .collect();
        let grid = ImageTensor::from_vec(1, grid_h, grid_w, data).expect("grid shape");
        let texture = bicubic_resize(&grid, height, width).expect("upsample");
        for y in 0..height {
            let t = texture.row(0, y);
            for (v, tv) in img.row_mut(c, y).iter_mut().zip(t) {
                *v += tv;
            }
        }
    }

    // Hard-edged elliptical objects, most carrying stripe texture from the
    // fixed motif family.
    let n_objects = rng.random_range(3..=5);
    for _ in 0..n_objects {
        let cy = rng.random_range(0.0..height as f64);
        let cx = rng.random_range(0.0..width as f64);
        let ry = rng.random_range(height as f64 * 0.1..height as f64 * 0.35);
        let rx = rng.random_range(width as f64 * 0.1..width as f64 * 0.35);
        let color: [f64; 3] = [
            rng.random_range(0.1..0.9),
            rng.random_range(0.1..0.9),
            rng.random_range(0.1..0.9),
        ];
        let softness = rng.random_range(0.3..0.6);
        let striped = rng.random_bool(0.75);
        let period = STRIPE_PERIODS[rng.random_range(0..STRIPE_PERIODS.len())];
        let stripe_freq = 2.0 * PI / period;
        let stripe_dir = rng.random_range(0.0..PI);
        let stripe_phase = rng.random_range(0.0..2.0 * PI);
        for y in 0..height {
            let dy = (y as f64 - cy) / ry;
            for x in 0..width {
                let dx = (x as f64 - cx) / rx;
                let d = (dy * dy + dx * dx).sqrt();
                let edge = 1.0 / (1.0 + ((d - 1.0) * ry.min(rx) / softness).exp());
                if edge < 1e-4 {
                    continue;
                }
                let stripe = if striped {
                    let t = stripe_dir.cos() * x as f64 + stripe_dir.sin() * y as f64;
                    0.28 * (stripe_freq * t + stripe_phase).sin()
                } else {
                    0.0
                };
                for c in 0..3 {
                    let v = img.get(c, y, x);
                    let col = (color[c] + stripe).clamp(0.02, 0.98);
                    img.set(c, y, x, v * (1.0 - 0.92 * edge) + col * 0.92 * edge);
                }
            }
        }
    }

    // Thin high-contrast strokes.
    let n_strokes = rng.random_range(2..=4);
    for _ in 0..n_strokes {
        let y0 = rng.random_range(0.0..height as f64);
        let x0 = rng.random_range(0.0..width as f64);
        let angle = rng.random_range(0.0..PI);
        let len = rng.random_range(0.3..0.9) * height.min(width) as f64;
        let thickness = rng.random_range(1.0..1.8);
        let shade = if rng.random_bool(0.5) { 0.92 } else { 0.06 };
        let (dy, dx) = (angle.sin(), angle.cos());
        for c in 0..3 {
            for y in 0..height {
                for (x, v) in img.row_mut(c, y).iter_mut().enumerate() {
                    let py = y as f64 - y0;
                    let px = x as f64 - x0;
                    let along = py * dy + px * dx;
                    let across = (py * dx - px * dy).abs();
                    if along >= 0.0 && along <= len && across < thickness {
                        *v = shade;
                    }
                }
            }
        }
    }

    img.map(|v| v.clamp(0.02, 0.98)).quantize8()
}
