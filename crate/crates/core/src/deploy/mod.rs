//! Checkpoints, batch-norm folding and the real-time inference runtime.

mod checkpoint;
mod engine;
mod fold;
mod pipeline;

pub use checkpoint::{check_params, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, FORMAT_VERSION, MAGIC};
pub use engine::{infer_frame, ClassPrediction, Classifier, InferenceEngine, ReferenceModel, StubClassifier};
pub use fold::fold_batchnorm;
pub use pipeline::{run_pipeline, Clock, FrameResult, LatencyStats, PipelineConfig, PipelineStats};
