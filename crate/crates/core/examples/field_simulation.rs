//! A 15 m run through a medium-density flax field, with the ground-truth
//! oracle and optionally a trained checkpoint.
//!
//! cargo run --example field_simulation -- [ckpt.wpck]

use weedpilot::deploy::{Checkpoint, InferenceEngine};
use weedpilot::fieldsim::{simulate_run, FieldMap, Perception, RunReport, SprayPolicy};

fn show(name: &str, r: &RunReport) {
    println!(
        "{name:<7} weeds {:>2}/{:<2} sprayed  false sprays {:>2}  per-patch acc {}  frames {}/{}  {:.2} ml vs {:.2} ml continuous",
        r.weeds_sprayed,
        r.weeds_seen,
        r.false_sprays,
        r.per_patch_accuracy.map(|a| format!("{a:.3}")).unwrap_or_else(|| "n/a".into()),
        r.frames_processed,
        r.frames_acquired,
        r.herbicide_ml,
        r.baseline_ml
    );
}

fn main() -> weedpilot::Result<()> {
    let field = FieldMap::medium_density(15.0, 11)?;
    let policy = SprayPolicy::new(&field.taxonomy, 0.5)?;
    let duration = field.length_m / field.speed_mps;
    println!("{} patches over {} m at {} m/s", field.patches.len(), field.length_m, field.speed_mps);

    let oracle = simulate_run(&field, Perception::Oracle, &policy, field.speed_mps, duration, 11)?;
    show("oracle", &oracle);

    if let Some(path) = std::env::args().nth(1) {
        let engine = InferenceEngine::from_checkpoint(&Checkpoint::load(path.as_ref())?)?;
        let r = simulate_run(&field, Perception::Model(&engine), &policy, field.speed_mps, duration, 11)?;
        show("model", &r);
        for c in &r.per_class_accuracy {
            println!("  {:<6} {:>4} frames  {:.3}", c.class, c.frames, c.accuracy);
        }
    }
    Ok(())
}
