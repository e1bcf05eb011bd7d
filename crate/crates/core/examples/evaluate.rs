//! Evaluates a checkpoint on the held-out test role and prints per-class
//! precision, recall and F1.
//!
//! cargo run --example evaluate -- [ckpt.wpck]
//! Without a checkpoint an untrained model is used, which is only useful
//! to see the report layout.

use weedpilot::data::{generate_synthetic_corpus, stratified_split, ClassTaxonomy, CorpusSpec, SplitRatios};
use weedpilot::deploy::Checkpoint;
use weedpilot::eval::EvalReport;
use weedpilot::nn::{build_micro_mobilenet, InputSpec};
use weedpilot::train::{evaluate_samples, load_test_set};

fn main() -> weedpilot::Result<()> {
    let ck = match std::env::args().nth(1) {
        Some(p) => Checkpoint::load(p.as_ref())?,
        None => {
            let (g, p) = build_micro_mobilenet(0.25, 16, InputSpec::default(), 7)?;
            Checkpoint::new(g, p, ClassTaxonomy::aiweeds(), Default::default())?
        }
    };
    // same corpus and split as the train_micro example
    let manifest = generate_synthetic_corpus(&CorpusSpec::uniform(100, 384, 224), 7)?;
    let split = stratified_split(&manifest, SplitRatios::default(), 5, 7)?;
    let test = load_test_set(&manifest, &split, ck.graph.input.width, ck.graph.input.height)?;

    let (loss, cm) = evaluate_samples(&ck.graph, &ck.params, &test, 32)?;
    let report = EvalReport::new(cm, &ck.taxonomy, &ck.graph)?;
    println!("{:<6} {:>9} {:>7} {:>7} {:>4}", "class", "precision", "recall", "f1", "n");
    for c in &report.classes {
        println!("{:<6} {:>9.3} {:>7.3} {:>7.3} {:>4}", c.class, c.precision, c.recall, c.f1, c.support);
    }
    println!(
        "loss {loss:.4}  avg class accuracy {:.4}  overall {:.4}",
        report.avg_class_accuracy, report.overall_accuracy
    );
    Ok(())
}
