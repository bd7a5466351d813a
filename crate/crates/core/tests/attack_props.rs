//! Property tests for the attack invariants and the exact algebraic laws.

use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use srab_core::tensor::ImageTensor;
use srab_core::{
    bicubic_resize, build_micro_edsr, ifgsm_basic, partial_attack, pixel_shuffle,
    pixel_shuffle_grad, psnr, targeted_attack, AttackConfig, Mask, MicroEdsrConfig, SRModel,
};

fn random_image(c: usize, h: usize, w: usize, seed: u64) -> ImageTensor {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let data = (0..c * h * w).map(|_| rng.random_range(0.0..=1.0)).collect();
    ImageTensor::from_vec(c, h, w, data).unwrap()
}

fn random_mask(h: usize, w: usize, scale: usize, seed: u64) -> Mask {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let data = (0..h * w)
        .map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 })
        .collect();
    Mask::from_lr(ImageTensor::from_vec(1, h, w, data).unwrap(), scale).unwrap()
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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn basic_attack_invariants(
        seed in 0u64..1_000_000,
        alpha_k in 0u32..=32,
        iters in 1usize..8,
    ) {
        let model = tiny_model(seed ^ 0xabc);
        let x0 = random_image(3, 6, 6, seed);
        let config = AttackConfig::new(alpha_k as f64 / 255.0, iters, seed);
        let result = ifgsm_basic(&model, &x0, &config).unwrap();

        prop_assert!(result.perturbation.linf_norm() <= config.alpha);
        prop_assert!(result.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert_eq!(result.loss_trace.len(), iters);
        // Bit-determinism.
        let again = ifgsm_basic(&model, &x0, &config).unwrap();
        prop_assert_eq!(again.image, result.image);
    }

    #[test]
    fn partial_attack_support_and_invariants(
        seed in 0u64..1_000_000,
        alpha_k in 1u32..=32,
        iters in 1usize..6,
    ) {
        let model = tiny_model(seed ^ 0xdef);
        let x0 = random_image(3, 8, 8, seed);
        let mask = random_mask(8, 8, 4, seed ^ 0x55);
        let config = AttackConfig::new(alpha_k as f64 / 255.0, iters, seed);
        let result = partial_attack(&model, &x0, &mask, &config).unwrap();

        prop_assert!(result.perturbation.linf_norm() <= config.alpha);
        prop_assert!(result.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        // Support is exactly inside the mask.
        for c in 0..3 {
            for y in 0..8 {
                for x in 0..8 {
                    if mask.lr().get(0, y, x) == 0.0 {
                        prop_assert_eq!(result.image.get(c, y, x), x0.get(c, y, x));
                    }
                }
            }
        }
    }

    #[test]
    fn targeted_attack_invariants(
        seed in 0u64..1_000_000,
        alpha_k in 0u32..=32,
        iters in 1usize..6,
    ) {
        let model = tiny_model(seed ^ 0x123);
        let x0 = random_image(3, 6, 6, seed);
        let target = random_image(3, 6, 6, seed ^ 0x77);
        let config = AttackConfig::new(alpha_k as f64 / 255.0, iters, seed);
        let result = targeted_attack(&model, &x0, &target, &config).unwrap();

        prop_assert!(result.perturbation.linf_norm() <= config.alpha);
        prop_assert!(result.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        // Returned iterate never does worse than the starting point.
        let before = srab_core::attack_loss(&model, &x0, &target).unwrap();
        let after = srab_core::attack_loss(&model, &result.image, &target).unwrap();
        prop_assert!(after <= before);
    }

    #[test]
    fn bicubic_linearity(
        seed in 0u64..1_000_000,
        h in 3usize..7,
        w in 3usize..7,
        oh in 3usize..15,
        ow in 3usize..15,
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let x = random_image(1, h, w, seed);
        let y = random_image(1, h, w, seed ^ 0x9);
        let lhs = bicubic_resize(&x.scale(a).add(&y.scale(b)), oh, ow).unwrap();
        let rhs = bicubic_resize(&x, oh, ow).unwrap().scale(a)
            .add(&bicubic_resize(&y, oh, ow).unwrap().scale(b));
        prop_assert!(lhs.sub(&rhs).linf_norm() < 1e-9);
    }

    #[test]
    fn pixel_shuffle_roundtrip(seed in 0u64..1_000_000, r in 1usize..4, c in 1usize..3) {
        let input = random_image(c * r * r, 3, 4, seed);
        let out = pixel_shuffle(&input, r).unwrap();
        prop_assert_eq!(pixel_shuffle_grad(&out, r).unwrap(), input);
    }

    #[test]
    fn psnr_symmetry_and_quantize_idempotence(seed in 0u64..1_000_000) {
        let a = random_image(3, 5, 5, seed);
        let b = random_image(3, 5, 5, seed ^ 0x1111);
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        let q = a.quantize8();
        prop_assert_eq!(q.quantize8(), q);
    }

    #[test]
    fn lr_psnr_floor_after_quantization(
        seed in 0u64..1_000_000,
        alpha_k in 1u32..=32,
    ) {
        // Quantized attacked images still respect PSNR >= -20 log10(alpha)
        // because the original is already on the 1/255 grid.
        let model = tiny_model(seed ^ 0x31);
        let x0 = random_image(3, 6, 6, seed).quantize8();
        let alpha = alpha_k as f64 / 255.0;
        let config = AttackConfig::new(alpha, 3, seed);
        let result = ifgsm_basic(&model, &x0, &config).unwrap();
        let quantized = result.image.quantize8();
        prop_assert!(quantized.sub(&x0).linf_norm() <= alpha + 1e-12);
        let db = psnr(&x0, &quantized).unwrap();
        prop_assert!(db >= -20.0 * alpha.log10() - 1e-9);
    }
}
