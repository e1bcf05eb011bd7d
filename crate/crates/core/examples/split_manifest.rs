//! Stratified 60/20/20 split of the full class-table counts, showing the
//! per-class floor rule and how validation rotates across folds.

use weedpilot::data::{generate_synthetic_corpus, stratified_split_fold, CorpusSpec, Role, SplitRatios, TABLE1_COUNTS};

fn main() -> weedpilot::Result<()> {
    let spec = CorpusSpec {
        counts: TABLE1_COUNTS.to_vec(),
        ..CorpusSpec::uniform(1, 384, 224)
    };
    // generator-backed: no pixels are rendered here
    let manifest = generate_synthetic_corpus(&spec, 1)?;
    let ratios = SplitRatios::default();
    println!("{:<6} {:>5} {:>5} {:>5} {:>5}", "class", "n", "train", "val", "test");
    for (class, &n) in manifest.per_class_counts() {
        let (tr, va, te) = ratios.counts(n);
        println!("{:<6} {n:>5} {tr:>5} {va:>5} {te:>5}", manifest.taxonomy().short_name(*class));
    }

    let k = 5;
    let folds: Vec<_> = (0..k)
        .map(|f| stratified_split_fold(&manifest, ratios, k, f, 7))
        .collect::<Result<_, _>>()?;
    let test0 = folds[0].indices(Role::Test);
    for (f, a) in folds.iter().enumerate() {
        assert_eq!(a.indices(Role::Test), test0, "test set is shared by all folds");
        println!("fold {f}: first val sample {}", a.indices(Role::Val)[0]);
    }
    Ok(())
}
