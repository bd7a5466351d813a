//! Scratch experiment runner for tuning acceptance-suite parameters.

use srab_core::*;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let steps_micro: usize = std::env::var("PROBE_STEPS").ok().and_then(|v| v.parse().ok()).unwrap_or(800);
    let steps_large: usize = std::env::var("PROBE_STEPS_LARGE").ok().and_then(|v| v.parse().ok()).unwrap_or(400);
    let iters: usize = std::env::var("PROBE_ITERS").ok().and_then(|v| v.parse().ok()).unwrap_or(50);

    // Training set: 16 synthetic photos, 96x96.
    let train_imgs: Vec<_> = (0..16).map(|i| synth_photo(96, 96, 9000 + i)).collect();
    let opts = TrainOptions { steps: steps_micro, patch_size: 32, batch_size: 8, learning_rate: 1e-3, seed: 42 };
    let t = Instant::now();
    let micro = train_micro_model(&MicroEdsrConfig::default(), &train_imgs, &opts).unwrap();
    println!("micro: {} steps in {:.1?}; loss {:.5} -> {:.5}",
        steps_micro, t.elapsed(),
        micro.loss_trace[..50.min(micro.loss_trace.len())].iter().sum::<f64>() / 50f64.min(micro.loss_trace.len() as f64),
        micro.loss_trace[micro.loss_trace.len().saturating_sub(50)..].iter().sum::<f64>() / 50f64.min(micro.loss_trace.len() as f64));
    let micro = micro.model;

    let t = Instant::now();
    let opts_l = TrainOptions { steps: steps_large, ..opts.clone() };
    let large = train_micro_model(&MicroEdsrConfig::preset("micro-large").unwrap(), &train_imgs, &opts_l).unwrap().model;
    println!("micro-large: {} steps in {:.1?}", steps_large, t.elapsed());

    let bicubic = build_bicubic_model(4).unwrap();

    // Eval dataset A: 16 photos 64x64 (LR 16x16).
    let eval_imgs: Vec<_> = (0..16).map(|i| (format!("e{:02}", i), synth_photo(64, 64, 100 + i as u64))).collect();
    let ds = Dataset::from_hr_images("eval", eval_imgs, 4).unwrap();

    // C4/C5: alpha sweep for micro and bicubic.
    let alphas: Vec<f64> = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0].iter().map(|k| k / 255.0).collect();
    let cfg = AttackConfig::new(alphas[0], iters, 7);
    let t = Instant::now();
    let sweep_micro = evaluate_sweep(&micro, &ds, EvalAttackKind::Basic, &alphas, &cfg).unwrap();
    println!("micro sweep in {:.1?}", t.elapsed());
    let t = Instant::now();
    let sweep_bicubic = evaluate_sweep(&bicubic, &ds, EvalAttackKind::Basic, &alphas, &cfg).unwrap();
    println!("bicubic sweep in {:.1?}", t.elapsed());
    println!("alpha  micro-SR  bicubic-SR  micro-LR");
    for (i, a) in alphas.iter().enumerate() {
        println!("{:>6}  {:8.2}  {:10.2}  {:8.2}",
            report::format_alpha(*a),
            sweep_micro.summary[i].mean_sr_psnr.db(),
            sweep_bicubic.summary[i].mean_sr_psnr.db(),
            sweep_micro.summary[i].mean_lr_psnr.db());
    }

    // C6: micro-large at 8/255.
    let t = Instant::now();
    let cfg8 = AttackConfig::new(8.0 / 255.0, iters, 7);
    let large8 = evaluate_attack(&large, &ds, EvalAttackKind::Basic, &cfg8).unwrap();
    println!("micro-large @8/255: SR {:.2} dB ({:.1?})", large8.summary[0].mean_sr_psnr.db(), t.elapsed());

    // C7: partial attacks at 8/255.
    let t = Instant::now();
    let part_micro = evaluate_attack(&micro, &ds, EvalAttackKind::PartialCenter, &cfg8).unwrap();
    let part_bicubic = evaluate_attack(&bicubic, &ds, EvalAttackKind::PartialCenter, &cfg8).unwrap();
    println!("partial outer SR: micro {:.2} dB, bicubic {:.2} dB ({:.1?})",
        part_micro.summary[0].mean_outer_sr_psnr.as_ref().unwrap().db(),
        part_bicubic.summary[0].mean_outer_sr_psnr.as_ref().unwrap().db(),
        t.elapsed());

    // C8: universal, 12 train + 4 held out, alpha 4/255, full-image crop.
    let t = Instant::now();
    let uni_train: Vec<_> = ds.entries[..12].iter().map(|e| e.lr.clone()).collect();
    let cfg4 = AttackConfig::new(4.0 / 255.0, iters, 11);
    let uni = universal_attack(&micro, &uni_train, 16, 16, &cfg4).unwrap();
    let mut drops = vec![];
    for e in &ds.entries[12..] {
        let attacked = apply_universal(&e.lr, &uni.delta).unwrap().quantize8();
        let clean_db = psnr(&e.hr, &micro.forward(&e.lr).unwrap().clip(0.0, 1.0)).unwrap();
        let adv_db = psnr(&e.hr, &micro.forward(&attacked).unwrap().clip(0.0, 1.0)).unwrap();
        drops.push(clean_db - adv_db);
        println!("  held-out {}: clean {:.2} dB -> attacked {:.2} dB", e.id, clean_db, adv_db);
    }
    println!("universal mean drop {:.2} dB ({:.1?})", drops.iter().sum::<f64>() / 4.0, t.elapsed());

    // C9: robustness sweep, 24 images 48x48 (LR 12x12), 128 samples, 1/255.
    let t = Instant::now();
    let rob_imgs: Vec<_> = (0..24).map(|i| (format!("r{:02}", i), synth_photo(48, 48, 500 + i as u64))).collect();
    let rob_ds = Dataset::from_hr_images("rob", rob_imgs, 4).unwrap();
    let cfg1 = AttackConfig::new(1.0 / 255.0, iters, 13);
    let rob = robustness_sweep(&micro, &rob_ds, &cfg1, 128).unwrap();
    println!("robustness sweep: spearman {:?} ({:.1?})", rob.robustness.as_ref().unwrap().spearman, t.elapsed());

    // C10: targeted attack, shifted-frame target at 16/255, T=50.
    let t = Instant::now();
    let x0 = ds.entries[0].lr.clone();
    let mut target = x0.clone();
    for c in 0..3 { for y in 0..x0.height() { for x in (1..x0.width()).rev() {
        let v = target.get(c, y, x - 1); target.set(c, y, x, v);
    }}}
    let cfg16 = AttackConfig::new(16.0 / 255.0, 50, 17);
    let before = attack_loss(&micro, &x0, &target).unwrap();
    let res = targeted_attack(&micro, &x0, &target, &cfg16).unwrap();
    let after = attack_loss(&micro, &res.image, &target).unwrap();
    println!("targeted: {:.4} -> {:.4} ({:.1?})", before, after, t.elapsed());

    // C11: defenses at 8/255 on the eval set.
    let t = Instant::now();
    let mut und = vec![]; let mut res_def = vec![]; let mut ens_def = vec![];
    for (i, e) in ds.entries.iter().enumerate() {
        let cfg = AttackConfig { seed: 7u64.wrapping_add(i as u64), ..cfg8.clone() };
        let attacked = ifgsm_basic(&micro, &e.lr, &cfg).unwrap().image.quantize8();
        let clean_sr = micro.forward(&e.lr).unwrap();
        und.push(psnr(&clean_sr, &micro.forward(&attacked).unwrap()).unwrap());
        res_def.push(psnr(&clean_sr, &resize_defense(&micro, &attacked).unwrap()).unwrap());
        ens_def.push(psnr(&clean_sr, &self_ensemble(&micro, &attacked).unwrap()).unwrap());
    }
    let m = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    println!("defense @8/255: undefended {:.2}, resize {:.2}, ensemble {:.2} ({:.1?})",
        m(&und), m(&res_def), m(&ens_def), t.elapsed());

    println!("total {:.1?}", t0.elapsed());
}
