//! Classification metrics, evaluation reports and inference benchmarking.

mod metrics;
mod report;

pub use metrics::{
    argmax, avg_class_accuracy, confusion_matrix, f1_score, overall_accuracy, precision_recall_f1, ClassMetrics, ConfusionMatrix,
};
pub use report::{
    benchmark_classifier, benchmark_inference, peak_working_set, BenchmarkReport, ClassReport, EvalReport, MIN_TIMED_FRAMES,
};
