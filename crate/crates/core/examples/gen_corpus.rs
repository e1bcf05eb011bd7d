//! Renders a small procedural corpus to PNG, one directory per class.
//!
//! cargo run --example gen_corpus -- [per_class] [out_dir]

use std::path::PathBuf;

use weedpilot::data::{generate_synthetic_corpus, CorpusSpec};

fn main() -> weedpilot::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let per_class: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let out = PathBuf::from(args.get(2).cloned().unwrap_or_else(|| "target/corpus".into()));

    let manifest = generate_synthetic_corpus(&CorpusSpec::uniform(per_class, 384, 224), 1)?;
    let taxonomy = manifest.taxonomy().clone();
    for (i, s) in manifest.samples().iter().enumerate() {
        let dir = out.join(taxonomy.classes()[s.class_id].dir_name());
        std::fs::create_dir_all(&dir).map_err(|e| weedpilot::Error::io(&dir, e))?;
        s.load()?.save_png(&dir.join(format!("{i:05}.png")))?;
    }
    manifest.write_jsonl(&out.join("manifest.jsonl"), None)?;
    for (class, n) in manifest.per_class_counts() {
        println!("{:<6} {n}", taxonomy.short_name(*class));
    }
    println!("{} images under {}", manifest.len(), out.display());
    Ok(())
}
