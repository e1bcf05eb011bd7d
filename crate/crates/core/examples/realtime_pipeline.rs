//! Runs the acquire -> infer -> emit pipeline at 10 fps, first with the
//! folded model on the wall clock, then with a 250 ms stub on the virtual
//! clock to show the drop-oldest queue at work.

use std::time::Duration;

use weedpilot::data::{render_generated, ClassTaxonomy, GenParams, VariationRanges};
use weedpilot::deploy::{run_pipeline, Checkpoint, Clock, InferenceEngine, PipelineConfig, StubClassifier};
use weedpilot::nn::{build_micro_mobilenet, InputSpec};

fn main() -> weedpilot::Result<()> {
    let taxonomy = ClassTaxonomy::aiweeds();
    let (g, p) = build_micro_mobilenet(0.25, 16, InputSpec::default(), 7)?;
    let engine = InferenceEngine::from_checkpoint(&Checkpoint::new(g, p, taxonomy.clone(), Default::default())?)?;

    let frames = |n: usize| {
        (0..n).map(|i| {
            let gen = GenParams {
                seed: i as u64,
                width: 384,
                height: 224,
                variation: VariationRanges::default(),
            };
            render_generated(i % 16, &gen).expect("render").image
        })
    };

    let mut shown = 0;
    let stats = run_pipeline(
        frames(50),
        &engine,
        &mut |r| {
            if shown < 3 {
                println!(
                    "frame {:>3}: {} p={:.2} in {:.1} ms",
                    r.frame_index, r.prediction.class_name, r.prediction.probability, r.prediction.latency_ms
                );
                shown += 1;
            }
        },
        &PipelineConfig::default(),
    )?;
    println!("real clock: {}", stats.to_json()?);

    let stub = StubClassifier {
        class_id: 0,
        delay: Duration::ZERO,
        taxonomy,
    };
    let cfg = PipelineConfig {
        clock: Clock::Virtual { service_ms: 250.0 },
        ..Default::default()
    };
    let slow = run_pipeline(frames(300), &stub, &mut |_| {}, &cfg)?;
    println!(
        "250 ms stub: {} of {} frames dropped ({:.1}%)",
        slow.dropped,
        slow.frames_in,
        100.0 * slow.drop_rate()
    );
    Ok(())
}
