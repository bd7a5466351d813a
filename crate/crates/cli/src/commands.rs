//! Subcommand implementations.

use crate::{
    AttackArgs, AttackKindArg, CliError, DefendArgs, DefenseMethodArg, EvaluateArgs,
    RobustnessArgs, TrainArgs, TransferArgs,
};
use srab_core::report::{AttackSummary, ImageRow};
use srab_core::{
    apply_universal, ifgsm_basic, load_image_dir, load_png, load_weights, outer_region_psnr,
    partial_attack, psnr, resize_defense, robustness_sweep, save_png, save_weights, self_ensemble,
    targeted_attack, train_micro_model, transfer_matrix, universal_attack, AttackConfig,
    EvalAttackKind, EvalReport, Mask, MicroEdsrConfig, Psnr, ReportFormat, ReportKind, SRModel,
    TrainOptions,
};
use srab_core::tensor::ImageTensor;
use std::path::{Path, PathBuf};

/// Parses "k/255" fractions or plain floats into a budget in `[0, 1]`.
pub fn parse_alpha(s: &str) -> Result<f64, String> {
    let value = if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num
            .trim()
            .parse()
            .map_err(|_| format!("bad numerator in '{}'", s))?;
        let d: f64 = den
            .trim()
            .parse()
            .map_err(|_| format!("bad denominator in '{}'", s))?;
        if d == 0.0 {
            return Err(format!("zero denominator in '{}'", s));
        }
        n / d
    } else {
        s.trim()
            .parse()
            .map_err(|_| format!("'{}' is not a number or k/255 fraction", s))?
    };
    if !(0.0..=1.0).contains(&value) {
        return Err(format!("alpha {} outside [0, 1]", s));
    }
    Ok(value)
}

/// Parses a comma-separated alpha list; bare integers mean k/255.
fn parse_alpha_list(s: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let alpha = if part.contains('/') || part.contains('.') {
            parse_alpha(part).map_err(CliError::Usage)?
        } else {
            let k: f64 = part
                .parse()
                .map_err(|_| CliError::Usage(format!("bad alpha '{}'", part)))?;
            parse_alpha(&format!("{}/255", k)).map_err(CliError::Usage)?
        };
        out.push(alpha);
    }
    if out.is_empty() {
        return Err(CliError::Usage("empty alpha list".into()));
    }
    Ok(out)
}

fn cache_dir() -> PathBuf {
    std::env::var_os("SRAB_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("srab-cache"))
}

/// Resolves a weight spec: "bicubic", a path, or a name under SRAB_CACHE.
fn resolve_model(spec: &str) -> Result<SRModel, CliError> {
    if spec == "bicubic" {
        return Ok(srab_core::build_bicubic_model(4)?);
    }
    let direct = Path::new(spec);
    if direct.is_file() {
        return Ok(load_weights(direct)?);
    }
    let cache = cache_dir();
    for candidate in [cache.join(spec), cache.join(format!("{}.sraw", spec))] {
        if candidate.is_file() {
            return Ok(load_weights(candidate)?);
        }
    }
    Err(CliError::Data(format!(
        "weights '{}' not found (not a file, not in {})",
        spec,
        cache.display()
    )))
}

/// Reports carry a timestamp only when SOURCE_DATE_EPOCH pins one, so
/// repeated invocations stay byte-identical.
fn report_timestamp() -> Option<u64> {
    std::env::var("SOURCE_DATE_EPOCH").ok()?.parse().ok()
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image")
        .to_string()
}

fn clip_save(image: &ImageTensor, path: &Path) -> Result<(), CliError> {
    save_png(&image.clip(0.0, 1.0), path)?;
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let config = MicroEdsrConfig::preset(&args.preset)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let dataset = load_image_dir(&args.data)?;
    let hr_images: Vec<ImageTensor> = dataset.entries.iter().map(|e| e.hr.clone()).collect();
    let opts = TrainOptions {
        steps: args.steps,
        patch_size: args.patch_size,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        seed: args.seed,
    };
    let trained = train_micro_model(&config, &hr_images, &opts)?;
    let mut model = trained.model;
    model.set_name(args.preset.clone());

    let out = match args.out {
        Some(path) => path,
        None => {
            let dir = cache_dir();
            std::fs::create_dir_all(&dir).map_err(|e| CliError::Data(e.to_string()))?;
            dir.join(format!(
                "{}-seed{}-steps{}.sraw",
                args.preset, args.seed, args.steps
            ))
        }
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::Data(e.to_string()))?;
        }
    }
    save_weights(&model, &out)?;

    let final_loss = trained.loss_trace.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} for {} steps (final batch loss {:.6}); weights -> {}",
        args.preset,
        args.steps,
        final_loss,
        out.display()
    );
    Ok(())
}

pub fn attack(args: AttackArgs) -> Result<(), CliError> {
    let model = resolve_model(&args.weights)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::Data(e.to_string()))?;
    let config = AttackConfig::new(args.alpha, args.iters, args.seed);

    let mut inputs = Vec::new();
    for path in &args.images {
        inputs.push((stem(path), load_png(path)?));
    }

    match args.kind {
        AttackKindArg::Universal => attack_universal(&model, &inputs, &config, &args),
        AttackKindArg::Basic | AttackKindArg::Partial | AttackKindArg::Targeted => {
            attack_per_image(&model, &inputs, &config, &args)
        }
    }
}

fn attack_per_image(
    model: &SRModel,
    inputs: &[(String, ImageTensor)],
    config: &AttackConfig,
    args: &AttackArgs,
) -> Result<(), CliError> {
    let target = match (args.kind, &args.target) {
        (AttackKindArg::Targeted, Some(path)) => Some(load_png(path)?),
        (AttackKindArg::Targeted, None) => {
            return Err(CliError::Usage(
                "--kind targeted requires --target <image>".into(),
            ))
        }
        _ => None,
    };

    let mut rows = Vec::new();
    for (i, (id, x0)) in inputs.iter().enumerate() {
        let cfg = AttackConfig {
            seed: config.seed.wrapping_add(i as u64),
            ..config.clone()
        };
        let mask = match args.kind {
            AttackKindArg::Partial => Some(load_mask(
                args.mask.as_deref().unwrap_or("center"),
                x0,
                model.scale(),
            )?),
            _ => None,
        };
        let result = match args.kind {
            AttackKindArg::Basic => ifgsm_basic(model, x0, &cfg)?,
            AttackKindArg::Partial => partial_attack(model, x0, mask.as_ref().unwrap(), &cfg)?,
            AttackKindArg::Targeted => targeted_attack(model, x0, target.as_ref().unwrap(), &cfg)?,
            AttackKindArg::Universal => unreachable!("handled separately"),
        };

        let attacked = result.image.quantize8();
        let sr_clean = model.forward(x0)?;
        let sr_attacked = model.forward(&attacked)?;
        save_png(&attacked, &args.out_dir.join(format!("{}_attacked.png", id)))?;
        clip_save(&sr_clean, &args.out_dir.join(format!("{}_sr_clean.png", id)))?;
        clip_save(
            &sr_attacked,
            &args.out_dir.join(format!("{}_sr_attacked.png", id)),
        )?;
        if let Some(t) = &target {
            clip_save(
                &model.forward(t)?,
                &args.out_dir.join(format!("{}_sr_target.png", id)),
            )?;
        }
        let outer = match &mask {
            Some(m) => {
                save_png(m.lr(), &args.out_dir.join(format!("{}_mask.png", id)))?;
                Some(Psnr::from_db(outer_region_psnr(&sr_clean, &sr_attacked, m)?))
            }
            None => None,
        };
        rows.push(ImageRow {
            image_id: id.clone(),
            alpha: config.alpha,
            lr_psnr: Some(Psnr::from_db(psnr(x0, &attacked)?)),
            sr_psnr: Some(Psnr::from_db(psnr(&sr_clean, &sr_attacked)?)),
            outer_sr_psnr: outer,
            robustness_index: None,
        });
    }

    let report = EvalReport {
        kind: ReportKind::Attack,
        created_unix: report_timestamp(),
        models: vec![model.name().to_string()],
        attack: Some(AttackSummary {
            kind: kind_label(args.kind).into(),
            alpha: config.alpha,
            iterations: config.iterations,
            seed: config.seed,
        }),
        images: rows,
        ..EvalReport::new()
    };
    report.emit(ReportFormat::Json, args.out_dir.join("report.json"))?;
    println!(
        "attacked {} image(s); outputs in {}",
        inputs.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn attack_universal(
    model: &SRModel,
    inputs: &[(String, ImageTensor)],
    config: &AttackConfig,
    args: &AttackArgs,
) -> Result<(), CliError> {
    let crop_h = args
        .crop_h
        .unwrap_or_else(|| inputs.iter().map(|(_, im)| im.height()).min().unwrap_or(0));
    let crop_w = args
        .crop_w
        .unwrap_or_else(|| inputs.iter().map(|(_, im)| im.width()).min().unwrap_or(0));
    let images: Vec<ImageTensor> = inputs.iter().map(|(_, im)| im.clone()).collect();
    let uni = universal_attack(model, &images, crop_h, crop_w, config)?;

    // Perturbation visualization centered at mid-gray.
    clip_save(
        &uni.delta.map(|v| 0.5 + v),
        &args.out_dir.join("universal_delta.png"),
    )?;

    let mut rows = Vec::new();
    for (id, x0) in inputs {
        let attacked = apply_universal(x0, &uni.delta)?.quantize8();
        let sr_clean = model.forward(x0)?;
        let sr_attacked = model.forward(&attacked)?;
        save_png(&attacked, &args.out_dir.join(format!("{}_attacked.png", id)))?;
        clip_save(&sr_clean, &args.out_dir.join(format!("{}_sr_clean.png", id)))?;
        clip_save(
            &sr_attacked,
            &args.out_dir.join(format!("{}_sr_attacked.png", id)),
        )?;
        rows.push(ImageRow {
            image_id: id.clone(),
            alpha: config.alpha,
            lr_psnr: Some(Psnr::from_db(psnr(x0, &attacked)?)),
            sr_psnr: Some(Psnr::from_db(psnr(&sr_clean, &sr_attacked)?)),
            outer_sr_psnr: None,
            robustness_index: None,
        });
    }

    let report = EvalReport {
        kind: ReportKind::Attack,
        created_unix: report_timestamp(),
        models: vec![model.name().to_string()],
        attack: Some(AttackSummary {
            kind: "universal".into(),
            alpha: config.alpha,
            iterations: config.iterations,
            seed: config.seed,
        }),
        images: rows,
        ..EvalReport::new()
    };
    report.emit(ReportFormat::Json, args.out_dir.join("report.json"))?;
    println!(
        "universal perturbation over {} image(s); outputs in {}",
        inputs.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn kind_label(kind: AttackKindArg) -> &'static str {
    match kind {
        AttackKindArg::Basic => "basic",
        AttackKindArg::Universal => "universal",
        AttackKindArg::Partial => "partial",
        AttackKindArg::Targeted => "targeted",
    }
}

/// "center" or a PNG whose first channel is thresholded at 0.5.
fn load_mask(spec: &str, x0: &ImageTensor, scale: usize) -> Result<Mask, CliError> {
    if spec == "center" {
        return Ok(Mask::center(x0.height(), x0.width(), scale)?);
    }
    let img = load_png(Path::new(spec))?;
    if img.height() != x0.height() || img.width() != x0.width() {
        return Err(CliError::Data(format!(
            "mask {}x{} does not match image {}x{}",
            img.height(),
            img.width(),
            x0.height(),
            x0.width()
        )));
    }
    let mut lr = ImageTensor::zeros(1, img.height(), img.width());
    for y in 0..img.height() {
        for x in 0..img.width() {
            lr.set(0, y, x, if img.get(0, y, x) > 0.5 { 1.0 } else { 0.0 });
        }
    }
    Ok(Mask::from_lr(lr, scale)?)
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let model = resolve_model(&args.weights)?;
    let dataset = load_image_dir(&args.data)?;
    let alphas = parse_alpha_list(&args.alphas)?;
    let kind = match args.kind.as_str() {
        "basic" => EvalAttackKind::Basic,
        "partial" => EvalAttackKind::PartialCenter,
        other => {
            return Err(CliError::Usage(format!(
                "unknown evaluate kind '{}' (expected basic or partial)",
                other
            )))
        }
    };
    let config = AttackConfig::new(alphas[0], args.iters, args.seed);
    let mut report = srab_core::evaluate_sweep(&model, &dataset, kind, &alphas, &config)?;
    report.created_unix = report_timestamp();
    report.emit(ReportFormat::Csv, &args.out)?;
    if let Some(json) = &args.json {
        report.emit(ReportFormat::Json, json)?;
    }
    for s in &report.summary {
        println!(
            "alpha {}: mean LR {} dB, mean SR {} dB",
            srab_core::report::format_alpha(s.alpha),
            display_psnr(&s.mean_lr_psnr),
            display_psnr(&s.mean_sr_psnr),
        );
    }
    Ok(())
}

fn display_psnr(p: &Psnr) -> String {
    match p.psnr {
        Some(v) => format!("{:.2}", v),
        None => "inf".into(),
    }
}

pub fn robustness(args: RobustnessArgs) -> Result<(), CliError> {
    let model = resolve_model(&args.weights)?;
    let dataset = load_image_dir(&args.data)?;
    let config = AttackConfig::new(args.alpha, args.iters, args.seed);
    let mut report = robustness_sweep(&model, &dataset, &config, args.samples)?;
    report.created_unix = report_timestamp();
    report.emit(ReportFormat::Csv, &args.out)?;
    if let Some(json) = &args.json {
        report.emit(ReportFormat::Json, json)?;
    }
    let summary = report.robustness.as_ref().expect("robustness section");
    match summary.spearman {
        Some(rho) => println!(
            "{} images, {} samples each: Spearman(index, SR PSNR) = {:.4}",
            report.images.len(),
            args.samples,
            rho
        ),
        None => println!(
            "{} images, {} samples each: correlation undefined (degenerate ranks)",
            report.images.len(),
            args.samples
        ),
    }
    Ok(())
}

pub fn defend(args: DefendArgs) -> Result<(), CliError> {
    let model = resolve_model(&args.weights)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::Data(e.to_string()))?;
    let x = load_png(&args.image)?;
    let id = stem(&args.image);

    let undefended = model.forward(&x)?;
    let defended = match args.method {
        DefenseMethodArg::Resize => resize_defense(&model, &x)?,
        DefenseMethodArg::Ensemble => self_ensemble(&model, &x)?,
    };
    clip_save(&undefended, &args.out_dir.join(format!("{}_sr.png", id)))?;
    clip_save(
        &defended,
        &args.out_dir.join(format!("{}_defended_sr.png", id)),
    )?;

    if let Some(clean_path) = &args.clean {
        let clean = load_png(clean_path)?;
        let clean_sr = model.forward(&clean)?;
        let undefended_db = psnr(&clean_sr, &undefended)?;
        let defended_db = psnr(&clean_sr, &defended.clip(0.0, 1.0))?;
        let rows = vec![
            ImageRow {
                image_id: format!("{}:undefended", id),
                alpha: 0.0,
                lr_psnr: None,
                sr_psnr: Some(Psnr::from_db(undefended_db)),
                outer_sr_psnr: None,
                robustness_index: None,
            },
            ImageRow {
                image_id: format!("{}:defended", id),
                alpha: 0.0,
                lr_psnr: None,
                sr_psnr: Some(Psnr::from_db(defended_db)),
                outer_sr_psnr: None,
                robustness_index: None,
            },
        ];
        let report = EvalReport {
            kind: ReportKind::Defense,
            created_unix: report_timestamp(),
            models: vec![model.name().to_string()],
            images: rows,
            ..EvalReport::new()
        };
        report.emit(ReportFormat::Json, args.out_dir.join("report.json"))?;
        println!(
            "SR PSNR vs clean output: undefended {:.2} dB, defended {:.2} dB",
            undefended_db, defended_db
        );
    } else {
        println!("defended SR written to {}", args.out_dir.display());
    }
    Ok(())
}

pub fn transfer(args: TransferArgs) -> Result<(), CliError> {
    if args.weights.len() < 2 {
        return Err(CliError::Usage(
            "transfer needs at least two --weights entries".into(),
        ));
    }
    let models = args
        .weights
        .iter()
        .map(|w| resolve_model(w))
        .collect::<Result<Vec<_>, _>>()?;
    let dataset = load_image_dir(&args.data)?;
    let config = AttackConfig::new(args.alpha, args.iters, args.seed);
    let mut report = transfer_matrix(&models, &dataset, &config)?;
    report.created_unix = report_timestamp();
    report.emit(ReportFormat::Csv, &args.out)?;
    if let Some(json) = &args.json {
        report.emit(ReportFormat::Json, json)?;
    }
    println!(
        "{}x{} transfer matrix -> {}",
        models.len(),
        models.len(),
        args.out.display()
    );
    Ok(())
}
