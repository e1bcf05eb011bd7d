//! Folds batch norm into the convolutions and compares per-frame latency
//! of the reference and folded models.

use rand::Rng;
use weedpilot::data::ClassTaxonomy;
use weedpilot::deploy::{Checkpoint, InferenceEngine, ReferenceModel};
use weedpilot::eval::{benchmark_classifier, benchmark_inference};
use weedpilot::imageops::ImageTensor;
use weedpilot::nn::{build_micro_mobilenet, InputSpec};
use weedpilot::seed;

const REFERENCE_MS: f64 = 47.78;

fn main() -> weedpilot::Result<()> {
    let ck = match std::env::args().nth(1) {
        Some(p) => Checkpoint::load(p.as_ref())?,
        None => {
            let (g, p) = build_micro_mobilenet(0.25, 16, InputSpec::default(), 7)?;
            Checkpoint::new(g, p, ClassTaxonomy::aiweeds(), Default::default())?
        }
    };
    let engine = InferenceEngine::from_checkpoint(&ck)?;
    println!(
        "parameters: {} with batch norm, {} folded",
        ck.graph.parameter_count(),
        engine.parameter_count()
    );

    let mut rng = seed::rng(3);
    let frames: Vec<ImageTensor> = (0..100)
        .map(|_| ImageTensor::from_fn(384, 224, |_, _| rng.gen()))
        .collect();
    let graph = ck.graph.clone();
    let reference = benchmark_classifier(&ReferenceModel { checkpoint: ck }, &graph, &frames, 5)?;
    let folded = benchmark_inference(&engine, &frames, 5)?;
    for (name, r) in [("reference", &reference), ("folded", &folded)] {
        println!(
            "{name:<9} mean {:>7.2} ms  p50 {:>7.2}  p95 {:>7.2}  max {:>7.2}  ({:.1} MFLOP, {} KiB working set)",
            r.latency_ms.mean,
            r.latency_ms.p50,
            r.latency_ms.p95,
            r.latency_ms.max,
            r.flops_per_frame as f64 / 1e6,
            r.peak_working_set_bytes / 1024
        );
    }
    println!("reference figure on the robot's embedded GPU: {REFERENCE_MS} ms");
    Ok(())
}
