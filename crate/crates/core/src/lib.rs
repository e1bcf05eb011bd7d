//! weedpilot: multi-class weed classification and classify-and-spray simulation.
//!
//! The crate covers the whole path from a labelled image corpus to a
//! simulated field run:
//!
//! - [`data`]: 16-class taxonomy, manifests, stratified splits and a
//!   procedural stand-in corpus.
//! - [`imageops`]: the RGB raster type, bilinear resize and the
//!   seed-deterministic augmentation policy.
//! - [`nn`]: from-scratch layers and the micro MobileNetV2-style classifier
//!   (GAP -> Dense(16) -> Sigmoid head).
//! - [`train`]: binary cross-entropy, Adam and the plateau scheduler with
//!   halve / abort / restart-from-best semantics.
//! - [`eval`]: confusion matrices, per-class F1 and latency benchmarking.
//! - [`deploy`]: checkpoints, batch-norm folding, the inference engine and
//!   the bounded-queue real-time pipeline.
//! - [`fieldsim`]: synthetic flax field, frame rendering, spray controller
//!   and herbicide accounting.
//! - [`cli`]: the `weedpilot` command-line workflow.

pub mod cli;
pub mod data;
pub mod deploy;
pub mod error;
pub mod eval;
pub mod fieldsim;
pub mod imageops;
pub mod nn;
pub mod seed;
pub mod train;

pub use error::{Error, Result};

/// Environment variable that forces bit-reproducible execution.
pub const DETERMINISTIC_ENV: &str = "WEEDPILOT_DETERMINISTIC";

/// True when `WEEDPILOT_DETERMINISTIC=1` is set.
pub fn deterministic_mode() -> bool {
    std::env::var(DETERMINISTIC_ENV).map(|v| v == "1").unwrap_or(false)
}
