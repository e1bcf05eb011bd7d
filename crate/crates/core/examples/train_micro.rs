//! Trains the micro classifier on a generated corpus and writes the
//! best checkpoint and the per-epoch log.
//!
//! cargo run --release --example train_micro -- [per_class] [epochs] [out_dir] [lr]

use std::path::PathBuf;
use std::time::Instant;

use weedpilot::data::{generate_synthetic_corpus, stratified_split, CorpusSpec, SplitRatios};
use weedpilot::imageops::AugmentationPolicy;
use weedpilot::nn::{build_micro_mobilenet, InputSpec};
use weedpilot::train::{train_with_observer, TrainConfig};

fn main() -> weedpilot::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().collect();
    let per_class: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30);
    let out = PathBuf::from(args.get(3).cloned().unwrap_or_else(|| "target/train_micro".into()));
    std::fs::create_dir_all(&out).map_err(|e| weedpilot::Error::io(&out, e))?;

    let manifest = generate_synthetic_corpus(&CorpusSpec::uniform(per_class, 384, 224), 7)?;
    let split = stratified_split(&manifest, SplitRatios::default(), 5, 7)?;
    let lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(2e-3);
    let (graph, params) = build_micro_mobilenet(0.25, 16, InputSpec::default(), 7)?;
    println!("trainable parameters: {}", graph.trainable_count());

    let cfg = TrainConfig {
        max_epochs: epochs,
        lr_init: lr,
        restart_lr: lr / 2.0,
        seed: 7,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let outcome = train_with_observer(&manifest, &split, &graph, params, &cfg, &AugmentationPolicy::default(), &mut |r| {
        println!(
            "{:>3} train {:.4} val {:.4} acc {:.3} ({:.0}s)",
            r.epoch,
            r.train_loss,
            r.val_loss,
            r.val_avg_class_acc,
            start.elapsed().as_secs_f64()
        );
    })?;
    outcome.best.save(&out.join("ckpt.wpck"))?;
    outcome.log.write_csv(&out.join("train_log.csv"))?;
    println!(
        "best epoch {} val loss {:?} acc {:?} in {:.0}s",
        outcome.best.meta.epoch,
        outcome.best.meta.val_loss,
        outcome.best.meta.val_avg_class_acc,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
