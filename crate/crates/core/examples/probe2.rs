//! Fast iteration probe: amplification at 8/255, defenses, universal drop.

use srab_core::*;
use std::time::Instant;

fn main() {
    let steps: usize = std::env::var("S").ok().and_then(|v| v.parse().ok()).unwrap_or(2000);
    let patch: usize = std::env::var("P").ok().and_then(|v| v.parse().ok()).unwrap_or(32);
    let lr: f64 = std::env::var("LR").ok().and_then(|v| v.parse().ok()).unwrap_or(1e-3);
    let n_eval: usize = std::env::var("N").ok().and_then(|v| v.parse().ok()).unwrap_or(8);
    let iters: usize = 50;

    let t = Instant::now();
    let train_imgs: Vec<_> = (0..16).map(|i| synth_photo(96, 96, 9000 + i)).collect();
    let opts = TrainOptions { steps, patch_size: patch, batch_size: 8, learning_rate: lr, seed: 42 };
    let trained = train_micro_model(&MicroEdsrConfig::default(), &train_imgs, &opts).unwrap();
    let w = 50.min(trained.loss_trace.len());
    println!(
        "micro {} steps patch {} in {:.0?}; loss {:.5} -> {:.5}",
        steps, patch, t.elapsed(),
        trained.loss_trace[..w].iter().sum::<f64>() / w as f64,
        trained.loss_trace[trained.loss_trace.len() - w..].iter().sum::<f64>() / w as f64
    );
    let micro = trained.model;
    let bicubic = build_bicubic_model(4).unwrap();

    let eval_imgs: Vec<_> = (0..n_eval)
        .map(|i| (format!("e{:02}", i), synth_photo(64, 64, 100 + i as u64)))
        .collect();
    let ds = Dataset::from_hr_images("eval", eval_imgs, 4).unwrap();

    let cfg8 = AttackConfig::new(8.0 / 255.0, iters, 7);
    let t = Instant::now();
    let micro8 = evaluate_attack(&micro, &ds, EvalAttackKind::Basic, &cfg8).unwrap();
    let bi8 = evaluate_attack(&bicubic, &ds, EvalAttackKind::Basic, &cfg8).unwrap();
    println!(
        "@8/255: micro LR {:.2} SR {:.2} | bicubic SR {:.2} | amplification {:.2} dB, gap {:.2} dB ({:.0?})",
        micro8.summary[0].mean_lr_psnr.db(),
        micro8.summary[0].mean_sr_psnr.db(),
        bi8.summary[0].mean_sr_psnr.db(),
        micro8.summary[0].mean_lr_psnr.db() - micro8.summary[0].mean_sr_psnr.db(),
        bi8.summary[0].mean_sr_psnr.db() - micro8.summary[0].mean_sr_psnr.db(),
        t.elapsed()
    );

    // Clean-quality sanity: SR PSNR vs ground truth on clean inputs.
    let mut clean_db = vec![];
    for e in &ds.entries {
        clean_db.push(psnr(&e.hr, &micro.forward(&e.lr).unwrap().clip(0.0, 1.0)).unwrap());
    }
    let mut bi_clean = vec![];
    for e in &ds.entries {
        bi_clean.push(psnr(&e.hr, &bicubic.forward(&e.lr).unwrap().clip(0.0, 1.0)).unwrap());
    }
    println!(
        "clean GT PSNR: micro {:.2} dB, bicubic {:.2} dB",
        clean_db.iter().sum::<f64>() / clean_db.len() as f64,
        bi_clean.iter().sum::<f64>() / bi_clean.len() as f64
    );

    // Defenses.
    let t = Instant::now();
    let (mut und, mut rdef, mut edef) = (vec![], vec![], vec![]);
    for (i, e) in ds.entries.iter().enumerate() {
        let cfg = AttackConfig { seed: 7u64.wrapping_add(i as u64), ..cfg8.clone() };
        let attacked = ifgsm_basic(&micro, &e.lr, &cfg).unwrap().image.quantize8();
        let clean_sr = micro.forward(&e.lr).unwrap();
        und.push(psnr(&clean_sr, &micro.forward(&attacked).unwrap()).unwrap());
        rdef.push(psnr(&clean_sr, &resize_defense(&micro, &attacked).unwrap()).unwrap());
        edef.push(psnr(&clean_sr, &self_ensemble(&micro, &attacked).unwrap()).unwrap());
    }
    let m = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "defense: undefended {:.2}, resize {:.2} (+{:.2}), ensemble {:.2} (+{:.2}) ({:.0?})",
        m(&und), m(&rdef), m(&rdef) - m(&und), m(&edef), m(&edef) - m(&und), t.elapsed()
    );

    // Universal: train on first 3/4, hold out the rest.
    let t = Instant::now();
    let k = ds.entries.len() * 3 / 4;
    let uni_train: Vec<_> = ds.entries[..k].iter().map(|e| e.lr.clone()).collect();
    let cfg4 = AttackConfig::new(4.0 / 255.0, iters, 11);
    let uni = universal_attack(&micro, &uni_train, 16, 16, &cfg4).unwrap();
    let mut drops = vec![];
    for e in &ds.entries[k..] {
        let attacked = apply_universal(&e.lr, &uni.delta).unwrap().quantize8();
        let clean = psnr(&e.hr, &micro.forward(&e.lr).unwrap().clip(0.0, 1.0)).unwrap();
        let adv = psnr(&e.hr, &micro.forward(&attacked).unwrap().clip(0.0, 1.0)).unwrap();
        drops.push(clean - adv);
    }
    println!(
        "universal mean drop {:.2} dB over {} held-out ({:.0?})",
        drops.iter().sum::<f64>() / drops.len() as f64,
        drops.len(),
        t.elapsed()
    );
}
