//! Evaluation harness: PSNR protocol, dataset ingestion, attack sweeps,
//! transfer matrices, and the robustness-vs-PSNR pairing.
//!
//! Measurement protocol: LR PSNR compares the original input against the
//! attacked one; SR PSNR compares the model outputs for the original and
//! attacked inputs. Attacked images are quantized to 8 bits before
//! measurement because the threat model delivers image files.

use crate::attack::{ifgsm_basic, partial_attack, AttackConfig, Mask};
use crate::error::{Error, Result};
use crate::model::SRModel;
use crate::report::{
    AlphaSummary, AttackSummary, EvalReport, ImageRow, Psnr, ReportKind, RobustnessSummary,
    TransferMatrix,
};
use crate::resize::bicubic_resize;
use crate::robustness::robustness_index;
use crate::tensor::ImageTensor;
use image::ImageReader;
use rayon::prelude::*;
use std::path::Path;

/// Peak signal-to-noise ratio in dB over all channels and pixels, for
/// images on `[0, 1]`. Identical inputs yield the `+∞` sentinel.
pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.check_same_shape(b, "psnr inputs")?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

/// PSNR restricted to SR pixels outside the attack mask (`M_H = 0`).
pub fn outer_region_psnr(a: &ImageTensor, b: &ImageTensor, mask: &Mask) -> Result<f64> {
    a.check_same_shape(b, "outer psnr inputs")?;
    let hr = mask.hr();
    if hr.height() != a.height() || hr.width() != a.width() {
        return Err(Error::ShapeMismatch(format!(
            "mask HR {}x{} vs image {}x{}",
            hr.height(),
            hr.width(),
            a.height(),
            a.width()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 0..a.channels() {
        for y in 0..a.height() {
            let ra = a.row(c, y);
            let rb = b.row(c, y);
            let rm = hr.row(0, y);
            for x in 0..a.width() {
                if rm[x] == 0.0 {
                    let d = ra[x] - rb[x];
                    sum += d * d;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyOuterRegion);
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

/// One evaluation image: HR ground truth and the derived LR input.
#[derive(Debug, Clone)]
pub struct DatasetEntry {
    pub id: String,
    pub hr: ImageTensor,
    pub lr: ImageTensor,
}

/// A named set of images with LR inputs derived by bicubic downscale.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub entries: Vec<DatasetEntry>,
    pub scale: usize,
}

impl Dataset {
    /// Builds a dataset from HR images. Each image is center-cropped to a
    /// multiple of the scale so `f(LR)` aligns with HR exactly, then the LR
    /// input is derived by bicubic downscale and quantized (inputs are
    /// delivered as files).
    pub fn from_hr_images(
        name: impl Into<String>,
        images: Vec<(String, ImageTensor)>,
        scale: usize,
    ) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyDataset("no images supplied".into()));
        }
        if scale == 0 {
            return Err(Error::Config("dataset scale must be >= 1".into()));
        }
        let mut entries = Vec::with_capacity(images.len());
        for (id, hr) in images {
            let crop_h = hr.height() / scale * scale;
            let crop_w = hr.width() / scale * scale;
            if crop_h < 32 || crop_w < 32 {
                return Err(Error::Config(format!(
                    "image '{}' is {}x{}; HR images must be at least 32x32",
                    id,
                    hr.height(),
                    hr.width()
                )));
            }
            let hr = hr.center_crop(crop_h, crop_w)?.quantize8();
            let lr = bicubic_resize(&hr, crop_h / scale, crop_w / scale)?
                .clip(0.0, 1.0)
                .quantize8();
            entries.push(DatasetEntry { id, hr, lr });
        }
        Ok(Self {
            name: name.into(),
            entries,
            scale,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Loads every `.png` in a directory (sorted by file name) as a dataset.
pub fn load_image_dir(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut files: Vec<_> = std::fs::read_dir(path)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| e.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no .png files in {}",
            path.display()
        )));
    }
    let mut images = Vec::with_capacity(files.len());
    for file in files {
        let id = file
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image")
            .to_string();
        images.push((id, load_png(&file)?));
    }
    let name = path
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    Dataset::from_hr_images(name, images, 4)
}

/// Loads an 8-bit PNG (or other 8-bit image file) as a 3-channel tensor.
pub fn load_png(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let decoded = ImageReader::open(path.as_ref())?.decode()?;
    use image::DynamicImage::*;
    let rgb = match decoded {
        ImageLuma8(_) | ImageLumaA8(_) | ImageRgb8(_) | ImageRgba8(_) => decoded.to_rgb8(),
        other => {
            return Err(Error::UnsupportedBitDepth(format!(
                "{:?} (only 8-bit images are supported)",
                other.color()
            )))
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut out = ImageTensor::zeros(3, h, w);
    for (x, y, pixel) in rgb.enumerate_pixels() {
        for c in 0..3 {
            out.set(c, y as usize, x as usize, pixel.0[c] as f64 / 255.0);
        }
    }
    Ok(out)
}

/// Saves a 1- or 3-channel image as an 8-bit RGB PNG. Values are clamped
/// to `[0, 1]` and quantized; `save_png` followed by [`load_png`]
/// reproduces `image.quantize8()` exactly.
pub fn save_png(image: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let (c, h, w) = image.shape();
    if c != 1 && c != 3 {
        return Err(Error::ShapeMismatch(format!(
            "PNG export expects 1 or 3 channels, got {}",
            c
        )));
    }
    let mut rgb = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = |ch: usize| {
                (image.get(ch, y, x).clamp(0.0, 1.0) * 255.0).round() as u8
            };
            let (r, g, b) = if c == 1 {
                let v = px(0);
                (v, v, v)
            } else {
                (px(0), px(1), px(2))
            };
            rgb.put_pixel(x as u32, y as u32, image::Rgb([r, g, b]));
        }
    }
    rgb.save(path.as_ref())?;
    Ok(())
}

/// Which attack the evaluation harness runs per image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalAttackKind {
    Basic,
    /// Partial attack with the central-quarter mask; outer-region PSNR is
    /// recorded alongside.
    PartialCenter,
}

impl EvalAttackKind {
    pub fn label(&self) -> &'static str {
        match self {
            EvalAttackKind::Basic => "basic",
            EvalAttackKind::PartialCenter => "partial-center",
        }
    }
}

/// Per-image seed derivation: one master seed, offset by image index.
fn image_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

struct ImageEval {
    lr_psnr: f64,
    sr_psnr: f64,
    outer_sr_psnr: Option<f64>,
    attacked: ImageTensor,
}

fn eval_one(
    model: &SRModel,
    entry: &DatasetEntry,
    kind: EvalAttackKind,
    config: &AttackConfig,
) -> Result<ImageEval> {
    let x0 = &entry.lr;
    let result = match kind {
        EvalAttackKind::Basic => ifgsm_basic(model, x0, config)?,
        EvalAttackKind::PartialCenter => {
            let mask = Mask::center(x0.height(), x0.width(), model.scale())?;
            partial_attack(model, x0, &mask, config)?
        }
    };
    let attacked = result.image.quantize8();
    let lr_psnr = psnr(x0, &attacked)?;
    let sr_clean = model.forward(x0)?;
    let sr_attacked = model.forward(&attacked)?;
    let sr_psnr = psnr(&sr_clean, &sr_attacked)?;
    let outer_sr_psnr = match kind {
        EvalAttackKind::Basic => None,
        EvalAttackKind::PartialCenter => {
            let mask = Mask::center(x0.height(), x0.width(), model.scale())?;
            Some(outer_region_psnr(&sr_clean, &sr_attacked, &mask)?)
        }
    };
    Ok(ImageEval {
        lr_psnr,
        sr_psnr,
        outer_sr_psnr,
        attacked,
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Runs an attack over the dataset at one budget and reports per-image and
/// mean LR/SR PSNR values.
pub fn evaluate_attack(
    model: &SRModel,
    dataset: &Dataset,
    kind: EvalAttackKind,
    config: &AttackConfig,
) -> Result<EvalReport> {
    evaluate_sweep(model, dataset, kind, &[config.alpha], config)
}

/// Alpha-sweep evaluation: one row per image per alpha, plus per-alpha
/// means. Per-image work runs in parallel; rows are ordered by alpha then
/// image id.
pub fn evaluate_sweep(
    model: &SRModel,
    dataset: &Dataset,
    kind: EvalAttackKind,
    alphas: &[f64],
    config: &AttackConfig,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset(dataset.name.clone()));
    }
    if alphas.is_empty() {
        return Err(Error::Config("no alpha values supplied".into()));
    }
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &alpha in alphas {
        let per_image: Vec<ImageEval> = dataset
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, entry)| {
                let cfg = AttackConfig {
                    alpha,
                    iterations: config.iterations,
                    seed: image_seed(config.seed, i),
                };
                eval_one(model, entry, kind, &cfg)
            })
            .collect::<Result<_>>()?;

        let lr: Vec<f64> = per_image.iter().map(|e| e.lr_psnr).collect();
        let sr: Vec<f64> = per_image.iter().map(|e| e.sr_psnr).collect();
        summaries.push(AlphaSummary {
            alpha,
            mean_lr_psnr: Psnr::from_db(mean(&lr)),
            mean_sr_psnr: Psnr::from_db(mean(&sr)),
            mean_outer_sr_psnr: if kind == EvalAttackKind::PartialCenter {
                let outer: Vec<f64> = per_image
                    .iter()
                    .filter_map(|e| e.outer_sr_psnr)
                    .collect();
                Some(Psnr::from_db(mean(&outer)))
            } else {
                None
            },
        });
        for (entry, eval) in dataset.entries.iter().zip(&per_image) {
            rows.push(ImageRow {
                image_id: entry.id.clone(),
                alpha,
                lr_psnr: Some(Psnr::from_db(eval.lr_psnr)),
                sr_psnr: Some(Psnr::from_db(eval.sr_psnr)),
                outer_sr_psnr: eval.outer_sr_psnr.map(Psnr::from_db),
                robustness_index: None,
            });
        }
    }

    Ok(EvalReport {
        kind: ReportKind::AlphaSweep,
        models: vec![model.name().to_string()],
        attack: Some(AttackSummary {
            kind: kind.label().to_string(),
            alpha: alphas[0],
            iterations: config.iterations,
            seed: config.seed,
        }),
        images: rows,
        summary: summaries,
        transfer: None,
        robustness: None,
        ..EvalReport::new()
    })
}

/// Source × target transfer matrix: entry `[s][t]` is target `t`'s mean SR
/// PSNR on examples attacked against source `s`. The diagonal reproduces
/// the basic-attack result.
pub fn transfer_matrix(
    models: &[SRModel],
    dataset: &Dataset,
    config: &AttackConfig,
) -> Result<EvalReport> {
    if models.len() < 2 {
        return Err(Error::Config(
            "transfer matrix needs at least 2 models".into(),
        ));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset(dataset.name.clone()));
    }

    let mut matrix = Vec::with_capacity(models.len());
    for source in models {
        // Attack every image against the source model, then measure every
        // target on the quantized adversarial inputs.
        let attacked: Vec<ImageTensor> = dataset
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, entry)| {
                let cfg = AttackConfig {
                    seed: image_seed(config.seed, i),
                    ..config.clone()
                };
                Ok(eval_one(source, entry, EvalAttackKind::Basic, &cfg)?.attacked)
            })
            .collect::<Result<_>>()?;

        let mut row = Vec::with_capacity(models.len());
        for target in models {
            let psnrs: Vec<f64> = dataset
                .entries
                .par_iter()
                .zip(attacked.par_iter())
                .map(|(entry, adv)| {
                    let clean = target.forward(&entry.lr)?;
                    let adv_sr = target.forward(adv)?;
                    psnr(&clean, &adv_sr)
                })
                .collect::<Result<_>>()?;
            row.push(Psnr::from_db(mean(&psnrs)));
        }
        matrix.push(row);
    }

    let names: Vec<String> = models.iter().map(|m| m.name().to_string()).collect();
    Ok(EvalReport {
        kind: ReportKind::Transfer,
        models: names.clone(),
        attack: Some(AttackSummary {
            kind: "basic".into(),
            alpha: config.alpha,
            iterations: config.iterations,
            seed: config.seed,
        }),
        transfer: Some(TransferMatrix {
            sources: names.clone(),
            targets: names,
            mean_sr_psnr: matrix,
        }),
        ..EvalReport::new()
    })
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either sequence has no rank variance (or fewer than two points).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Average rank over the tie group, 1-based.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

/// Pairs each image's robustness index with its basic-attack SR PSNR at the
/// same budget and reports the Spearman correlation between the two.
pub fn robustness_sweep(
    model: &SRModel,
    dataset: &Dataset,
    config: &AttackConfig,
    n_samples: usize,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset(dataset.name.clone()));
    }

    let per_image: Vec<(f64, ImageEval)> = dataset
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, entry)| {
            let seed = image_seed(config.seed, i);
            let report = robustness_index(model, &entry.lr, config.alpha, n_samples, seed)?;
            let cfg = AttackConfig {
                seed,
                ..config.clone()
            };
            let eval = eval_one(model, entry, EvalAttackKind::Basic, &cfg)?;
            Ok((report.index, eval))
        })
        .collect::<Result<_>>()?;

    let indices: Vec<f64> = per_image.iter().map(|(b, _)| *b).collect();
    let sr: Vec<f64> = per_image.iter().map(|(_, e)| e.sr_psnr).collect();
    let correlation = spearman(&indices, &sr);

    let rows = dataset
        .entries
        .iter()
        .zip(&per_image)
        .map(|(entry, (index, eval))| ImageRow {
            image_id: entry.id.clone(),
            alpha: config.alpha,
            lr_psnr: Some(Psnr::from_db(eval.lr_psnr)),
            sr_psnr: Some(Psnr::from_db(eval.sr_psnr)),
            outer_sr_psnr: None,
            robustness_index: Some(*index),
        })
        .collect();

    Ok(EvalReport {
        kind: ReportKind::RobustnessSweep,
        models: vec![model.name().to_string()],
        attack: Some(AttackSummary {
            kind: "basic".into(),
            alpha: config.alpha,
            iterations: config.iterations,
            seed: config.seed,
        }),
        images: rows,
        summary: vec![AlphaSummary {
            alpha: config.alpha,
            mean_lr_psnr: Psnr::from_db(mean(
                &per_image.iter().map(|(_, e)| e.lr_psnr).collect::<Vec<_>>(),
            )),
            mean_sr_psnr: Psnr::from_db(mean(&sr)),
            mean_outer_sr_psnr: None,
        }],
        robustness: Some(RobustnessSummary {
            n_samples,
            alpha: config.alpha,
            spearman: correlation,
            degenerate: correlation.is_none(),
        }),
        ..EvalReport::new()
    })
}
