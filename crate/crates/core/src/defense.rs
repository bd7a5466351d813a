//! Inference-time defenses.
//!
//! Two mitigations: shrinking the input by one pixel and resizing it back
//! before super-resolving, and geometric self-ensembling over the eight
//! dihedral transforms of the input.

use crate::error::{Error, Result};
use crate::model::SRModel;
use crate::resize::bicubic_resize;
use crate::tensor::ImageTensor;

/// The eight symmetries of the square: a quarter-turn count composed with
/// an optional horizontal flip (flip applied first).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dihedral {
    pub quarter_turns: u8,
    pub flip: bool,
}

impl Dihedral {
    /// All eight transforms in the fixed ensemble order.
    pub const ALL: [Dihedral; 8] = [
        Dihedral { quarter_turns: 0, flip: false },
        Dihedral { quarter_turns: 1, flip: false },
        Dihedral { quarter_turns: 2, flip: false },
        Dihedral { quarter_turns: 3, flip: false },
        Dihedral { quarter_turns: 0, flip: true },
        Dihedral { quarter_turns: 1, flip: true },
        Dihedral { quarter_turns: 2, flip: true },
        Dihedral { quarter_turns: 3, flip: true },
    ];

    pub fn apply(&self, x: &ImageTensor) -> ImageTensor {
        let mut out = if self.flip { flip_horizontal(x) } else { x.clone() };
        for _ in 0..self.quarter_turns {
            out = rotate_ccw(&out);
        }
        out
    }

    pub fn invert(&self, x: &ImageTensor) -> ImageTensor {
        let mut out = x.clone();
        for _ in 0..(4 - self.quarter_turns) % 4 {
            out = rotate_ccw(&out);
        }
        if self.flip {
            out = flip_horizontal(&out);
        }
        out
    }
}

fn flip_horizontal(x: &ImageTensor) -> ImageTensor {
    let (c, h, w) = x.shape();
    let mut out = ImageTensor::zeros(c, h, w);
    for ch in 0..c {
        for y in 0..h {
            let src = x.row(ch, y);
            let dst = out.row_mut(ch, y);
            for (i, v) in dst.iter_mut().enumerate() {
                *v = src[w - 1 - i];
            }
        }
    }
    out
}

/// Counterclockwise quarter turn: `(C, H, W) -> (C, W, H)`.
fn rotate_ccw(x: &ImageTensor) -> ImageTensor {
    let (c, h, w) = x.shape();
    let mut out = ImageTensor::zeros(c, w, h);
    for ch in 0..c {
        for y in 0..h {
            let src = x.row(ch, y);
            for (xx, &v) in src.iter().enumerate() {
                out.set(ch, w - 1 - xx, y, v);
            }
        }
    }
    out
}

/// Resize defense: shrink by one pixel in each dimension, resize back,
/// clip to `[0, 1]`, then super-resolve.
pub fn resize_defense(model: &SRModel, x: &ImageTensor) -> Result<ImageTensor> {
    if x.height() < 2 || x.width() < 2 {
        return Err(Error::Config(format!(
            "resize defense needs dims >= 2, got {}x{}",
            x.height(),
            x.width()
        )));
    }
    let shrunk = bicubic_resize(x, x.height() - 1, x.width() - 1)?;
    let restored = bicubic_resize(&shrunk, x.height(), x.width())?.clip(0.0, 1.0);
    model.forward(&restored)
}

/// Geometric self-ensemble: averages `g⁻¹(f(g(X)))` over the eight dihedral
/// transforms, in fixed order, and clips the mean to `[0, 1]`.
pub fn self_ensemble(model: &SRModel, x: &ImageTensor) -> Result<ImageTensor> {
    let mut acc: Option<ImageTensor> = None;
    for g in Dihedral::ALL {
        let sr = model.forward(&g.apply(x))?;
        let back = g.invert(&sr);
        match &mut acc {
            None => acc = Some(back),
            Some(a) => a.add_assign(&back),
        }
    }
    Ok(acc.expect("eight branches").scale(1.0 / 8.0).clip(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_bicubic_model, build_micro_edsr, MicroEdsrConfig};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_image(c: usize, h: usize, w: usize, seed: u64) -> ImageTensor {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data = (0..c * h * w).map(|_| rng.random_range(0.0..1.0)).collect();
        ImageTensor::from_vec(c, h, w, data).unwrap()
    }

    #[test]
    fn dihedral_roundtrip_all_eight() {
        let x = random_image(3, 5, 7, 1);
        for g in Dihedral::ALL {
            assert_eq!(g.invert(&g.apply(&x)), x, "roundtrip failed for {:?}", g);
        }
    }

    #[test]
    fn dihedral_transforms_are_distinct() {
        let x = random_image(1, 4, 4, 2);
        let outputs: Vec<_> = Dihedral::ALL.iter().map(|g| g.apply(&x)).collect();
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(outputs[i], outputs[j], "{} vs {}", i, j);
            }
        }
    }

    #[test]
    fn rotate_shapes() {
        let x = random_image(2, 3, 5, 3);
        let g = Dihedral { quarter_turns: 1, flip: false };
        assert_eq!(g.apply(&x).shape(), (2, 5, 3));
    }

    #[test]
    fn resize_defense_constant_image_unchanged() {
        let model = build_bicubic_model(4).unwrap();
        let x = ImageTensor::filled(3, 8, 8, 0.6);
        let defended = resize_defense(&model, &x).unwrap();
        let plain = model.forward(&x).unwrap();
        assert!(defended.sub(&plain).linf_norm() < 1e-12);
    }

    #[test]
    fn resize_defense_degenerate_dims() {
        let model = build_bicubic_model(2).unwrap();
        let x = ImageTensor::filled(3, 1, 8, 0.5);
        assert!(resize_defense(&model, &x).is_err());
    }

    #[test]
    fn ensemble_equals_forward_on_constant_input() {
        let model = build_bicubic_model(4).unwrap();
        let x = ImageTensor::filled(3, 6, 6, 0.3);
        let ens = self_ensemble(&model, &x).unwrap();
        let plain = model.forward(&x).unwrap().clip(0.0, 1.0);
        assert!(ens.sub(&plain).linf_norm() < 1e-12);

        let mut zero = build_micro_edsr(
            &MicroEdsrConfig {
                channels: 4,
                blocks: 1,
                ..MicroEdsrConfig::default()
            },
            4,
        )
        .unwrap();
        for k in zero.kernels_mut() {
            k.weights.iter_mut().for_each(|w| *w = 0.0);
            k.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let ens = self_ensemble(&zero, &x).unwrap();
        assert!(ens.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ensemble_commutes_with_bicubic() {
        // The resize kernel is even-symmetric and the clamp rule mirrors, so
        // bicubic commutes with every dihedral transform; the ensemble then
        // equals the plain (clipped) forward up to summation order.
        let model = build_bicubic_model(4).unwrap();
        let x = random_image(3, 6, 8, 5);
        let ens = self_ensemble(&model, &x).unwrap();
        let plain = model.forward(&x).unwrap().clip(0.0, 1.0);
        assert!(ens.sub(&plain).linf_norm() < 1e-9);
    }

    #[test]
    fn ensemble_order_invariance() {
        // Averaging is order-insensitive up to tiny float reassociation.
        let model = build_micro_edsr(
            &MicroEdsrConfig {
                channels: 4,
                blocks: 1,
                ..MicroEdsrConfig::default()
            },
            6,
        )
        .unwrap();
        let x = random_image(3, 6, 6, 7);
        let ens = self_ensemble(&model, &x).unwrap();

        let mut acc = ImageTensor::zeros(3, 24, 24);
        for g in Dihedral::ALL.iter().rev() {
            acc.add_assign(&g.invert(&model.forward(&g.apply(&x)).unwrap()));
        }
        let reversed = acc.scale(1.0 / 8.0).clip(0.0, 1.0);
        assert!(ens.sub(&reversed).linf_norm() < 1e-12);
    }
}
