use std::time::Instant;
use instanet::model::ModelConfig;
use instanet::synthetic::ShapeCycleSpec;
use instanet::train::{run_fold, TrainConfig};

#[test]
#[ignore]
fn crit8_k6_bulge() {
    let spec = ShapeCycleSpec { scale_axis: Some(0), bulge_amplitude: 0.15, scale_amplitude: 0.25, frames: 20, ..Default::default() };
    let ds = instanet::synthetic::generate_dataset::<f64>(&spec, 42).unwrap();
    let mut mc = ModelConfig::desk();
    mc.cheb_order = 6;
    mc.bridge_dim = 24;
    let tc = TrainConfig { lr0: 1.5e-2, decay: 0.97, decay_every: 190, momentum: 0.9, max_epochs: 400, warmup_iters: 200, seed: 7 };
    let t0 = Instant::now();
    let mut wins = 0;
    let (mut me, mut mb) = (0.0, 0.0);
    for held in 0..20 {
        let r = run_fold(&ds, held, &mc, &tc, None).unwrap();
        let win = r.distance_error < r.baseline_error;
        wins += win as usize;
        me += r.distance_error;
        mb += r.baseline_error;
        println!("crit8kb fold {held}: err {:.4} base {:.4} l1 {:.4} {}", r.distance_error, r.baseline_error, r.final_l1, if win { "WIN" } else { "loss" });
    }
    println!("crit8kb: wins {wins}/20, mean {:.4} vs base {:.4} (improve {:.1}%) in {:.0}s",
        me / 20.0, mb / 20.0, 100.0 * (1.0 - me / mb), t0.elapsed().as_secs_f64());
}

#[test]
#[ignore]
fn crit9_k6() {
    let spec = ShapeCycleSpec { scale_axis: Some(0), bulge_amplitude: 0.0, scale_amplitude: 0.45, frames: 8, ..Default::default() };
    let ds = instanet::synthetic::generate_dataset::<f64>(&spec, 42).unwrap();
    let mut mc = ModelConfig::desk();
    mc.cheb_order = 6;
    mc.bridge_dim = 24;
    for seed in 1u64..=6 {
        let t0 = Instant::now();
        let tc = TrainConfig { lr0: 1.5e-2, decay: 0.97, decay_every: 70, momentum: 0.9, max_epochs: 400, warmup_iters: 200, seed };
        let mut errs = Vec::new();
        for held in 0..8 {
            let r = run_fold(&ds, held, &mc, &tc, None).unwrap();
            errs.push((r.distance_error, held));
        }
        let line: Vec<String> = errs.iter().map(|(e, h)| format!("{h}:{e:.3}")).collect();
        errs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        println!("crit9k6 seed {seed}: top2 {{{},{}}} ({:.0}s) | {}", errs[0].1, errs[1].1, t0.elapsed().as_secs_f64(), line.join(" "));
    }
}
