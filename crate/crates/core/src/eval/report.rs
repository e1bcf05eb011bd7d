//! Evaluation reports and the inference benchmark.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{avg_class_accuracy, overall_accuracy, precision_recall_f1, ConfusionMatrix};
use crate::data::ClassTaxonomy;
use crate::deploy::{Classifier, InferenceEngine, LatencyStats};
use crate::error::{Error, Result};
use crate::imageops::ImageTensor;
use crate::nn::{LayerCost, ModelGraph};

/// Fewest timed frames for which percentiles are reported.
pub const MIN_TIMED_FRAMES: usize = 10;
const BYTES_PER_PARAM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub warmup: usize,
    pub timed_frames: usize,
    pub latency_ms: LatencyStats,
    pub per_frame_ms: Vec<f64>,
    pub parameter_count: usize,
    pub parameter_bytes: usize,
    pub flops_per_frame: u64,
    pub peak_working_set_bytes: usize,
    pub layers: Vec<LayerCost>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: u64,
    pub classes: Vec<ClassReport>,
    pub avg_class_accuracy: f64,
    pub overall_accuracy: f64,
    pub loss: Option<f64>,
    pub parameter_count: usize,
    pub peak_working_set_bytes: usize,
    /// Wall-clock numbers; absent in deterministic mode.
    pub latency_ms: Option<LatencyStats>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn new(cm: ConfusionMatrix, taxonomy: &ClassTaxonomy, graph: &ModelGraph) -> Result<Self> {
        if cm.num_classes() != taxonomy.len() {
            return Err(Error::InvalidArgument(format!(
                "confusion matrix has {} classes, taxonomy {}",
                cm.num_classes(),
                taxonomy.len()
            )));
        }
        let classes = (0..cm.num_classes())
            .map(|c| {
                let m = precision_recall_f1(&cm, c);
                ClassReport {
                    class: taxonomy.short_name(c).to_string(),
                    precision: m.precision,
                    recall: m.recall,
                    f1: m.f1,
                    support: cm.row_sum(c),
                }
            })
            .collect();
        Ok(Self {
            samples: cm.total(),
            classes,
            avg_class_accuracy: avg_class_accuracy(&cm),
            overall_accuracy: overall_accuracy(&cm),
            loss: None,
            parameter_count: graph.parameter_count(),
            peak_working_set_bytes: peak_working_set(graph)?,
            latency_ms: None,
            confusion: cm,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-class F1 as CSV, one row per class, for plotting.
    pub fn f1_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["class", "precision", "recall", "f1", "support"])?;
        for c in &self.classes {
            w.write_record([
                c.class.clone(),
                format!("{:.6}", c.precision),
                format!("{:.6}", c.recall),
                format!("{:.6}", c.f1),
                c.support.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Other(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Other(e.to_string()))
    }
}

/// Parameters plus the two largest adjacent activations of one frame,
/// at four bytes each. A lower bound on what inference needs resident.
pub fn peak_working_set(graph: &ModelGraph) -> Result<usize> {
    let shapes = graph.shapes()?;
    let mut peak = graph.input_shape().elems();
    for pair in shapes.windows(2) {
        peak = peak.max(pair[0].elems() + pair[1].elems());
    }
    if let Some(first) = shapes.first() {
        peak = peak.max(graph.input_shape().elems() + first.elems());
    }
    Ok(BYTES_PER_PARAM * (graph.parameter_count() + peak))
}

/// Times the folded engine frame by frame.
pub fn benchmark_inference(engine: &InferenceEngine, frames: &[ImageTensor], warmup_n: usize) -> Result<BenchmarkReport> {
    benchmark_classifier(engine, engine.graph(), frames, warmup_n)
}

/// Times any classifier; `graph` supplies the static cost estimates.
///
/// The first `warmup_n` frames (cycling `frames` if needed) are run and
/// discarded, then every frame in `frames` is timed once.
pub fn benchmark_classifier(
    classifier: &dyn Classifier,
    graph: &ModelGraph,
    frames: &[ImageTensor],
    warmup_n: usize,
) -> Result<BenchmarkReport> {
    if warmup_n == 0 {
        return Err(Error::InvalidArgument("benchmark needs at least one warm-up frame".into()));
    }
    if frames.len() < MIN_TIMED_FRAMES {
        return Err(Error::InvalidArgument(format!(
            "benchmark needs at least {MIN_TIMED_FRAMES} timed frames, got {}",
            frames.len()
        )));
    }
    for i in 0..warmup_n {
        classifier.classify(&frames[i % frames.len()])?;
    }
    let mut per_frame_ms = Vec::with_capacity(frames.len());
    for f in frames {
        let t0 = Instant::now();
        classifier.classify(f)?;
        per_frame_ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let layers = graph.layer_costs(1)?;
    let latency_ms = LatencyStats::from_samples(&per_frame_ms).expect("non-empty");
    Ok(BenchmarkReport {
        warmup: warmup_n,
        timed_frames: frames.len(),
        latency_ms,
        per_frame_ms,
        parameter_count: graph.parameter_count(),
        parameter_bytes: BYTES_PER_PARAM * graph.parameter_count(),
        flops_per_frame: layers.iter().map(|l| l.flops).sum(),
        peak_working_set_bytes: peak_working_set(graph)?,
        layers,
    })
}
