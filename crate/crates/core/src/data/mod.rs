//! Dataset taxonomy, manifests, stratified splitting and the procedural
//! stand-in corpus.

mod manifest;
mod split;
mod synth;
mod taxonomy;

pub use manifest::{build_manifest, GenParams, Manifest, ManifestRecord, Sample, SampleSource, SkipReport};
pub use split::{stratified_split, stratified_split_fold, Role, SplitAssignment, SplitRatios};
pub use synth::{
    generate_synthetic_corpus, render_background, render_generated, render_motif, CorpusSpec, MotifPlacement,
    RenderedSample, VariationRanges,
};
pub(crate) use synth::{apply_lighting, box_blur};
pub use taxonomy::{ClassInfo, ClassTaxonomy, NUM_CLASSES, TABLE1_COUNTS};
