//! Adversarial robustness toolkit for single-image super-resolution.
//!
//! Implements iterative signed-gradient attacks (basic, universal, partial,
//! targeted) against differentiable SR operators, an attack-agnostic
//! robustness index, two inference-time defenses, and the PSNR evaluation
//! harness that ties them together. Ships a bicubic baseline and trainable
//! micro CNN models so no external checkpoints are needed.
//!
//! All numerics are `f64`; every analytic gradient in the crate is checked
//! against central finite differences in the test suites.

pub mod attack;
pub mod defense;
pub mod error;
pub mod eval;
pub mod model;
pub mod ops;
pub mod report;
pub mod resize;
pub mod robustness;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod weights;

pub use attack::{
    apply_universal, attack_loss, attack_loss_gradient, ifgsm_basic, partial_attack,
    targeted_attack, universal_attack, AdversarialResult, AttackConfig, Mask,
    UniversalPerturbation,
};
pub use defense::{resize_defense, self_ensemble, Dihedral};
pub use error::{Error, Result};
pub use eval::{
    evaluate_attack, evaluate_sweep, load_image_dir, load_png, outer_region_psnr, psnr,
    robustness_sweep, save_png, spearman, transfer_matrix, Dataset, DatasetEntry, EvalAttackKind,
};
pub use model::{build_bicubic_model, build_micro_edsr, MicroEdsrConfig, ModelConfig, SRModel};
pub use ops::{
    conv2d_forward, conv2d_input_grad, finite_diff_gradient, pixel_shuffle, pixel_shuffle_grad,
    relative_error, relu_forward, relu_input_grad, ConvKernel,
};
pub use report::{EvalReport, Psnr, ReportFormat, ReportKind, REPORT_SCHEMA};
pub use resize::{bicubic_resize, bicubic_resize_grad};
pub use robustness::{robustness_index, RobustnessReport};
pub use synth::synth_photo;
pub use train::{train_micro_model, TrainOptions, TrainedModel};
pub use weights::{load_weights, read_weights, save_weights, write_weights};
