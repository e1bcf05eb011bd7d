use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::checkpoint::{check_params, Checkpoint};
use super::fold::fold_batchnorm;
use crate::data::ClassTaxonomy;
use crate::error::{Error, Result};
use crate::eval::argmax;
use crate::imageops::{resize_to, ImageTensor};
use crate::nn::{forward, forward_checked, Mode, ModelGraph, ParameterSet, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrediction {
    pub class_id: usize,
    pub class_name: String,
    pub probabilities: Vec<f32>,
    /// Probability of `class_id`.
    pub probability: f32,
    pub latency_ms: f64,
}

impl ClassPrediction {
    /// Argmax over `probabilities`, ties to the lowest id.
    pub fn from_probabilities(probabilities: Vec<f32>, taxonomy: &ClassTaxonomy, latency_ms: f64) -> Self {
        let class_id = argmax(&probabilities);
        Self {
            class_id,
            class_name: taxonomy.short_name(class_id).to_string(),
            probability: probabilities[class_id],
            probabilities,
            latency_ms,
        }
    }
}

/// Anything that turns a camera frame into a class prediction.
pub trait Classifier: Send + Sync {
    fn classify(&self, frame: &ImageTensor) -> Result<ClassPrediction>;
    fn taxonomy(&self) -> &ClassTaxonomy;
}

/// Frozen, batch-norm-free model ready for per-frame inference.
#[derive(Debug, Clone)]
pub struct InferenceEngine {
    graph: ModelGraph,
    params: ParameterSet<f32>,
    taxonomy: ClassTaxonomy,
    checked: bool,
}

impl InferenceEngine {
    /// Wraps an already folded graph. Graphs that still contain batch-norm
    /// are rejected.
    pub fn new(graph: ModelGraph, params: ParameterSet<f32>, taxonomy: ClassTaxonomy) -> Result<Self> {
        graph.validate()?;
        if graph.contains_batch_norm() {
            return Err(Error::InvalidArgument("inference engine needs a folded graph without batch-norm".into()));
        }
        check_params(&graph, &params)?;
        Ok(Self {
            graph,
            params,
            taxonomy,
            checked: false,
        })
    }

    /// Folds batch-norm out of a trained checkpoint.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let (graph, params) = if ck.graph.contains_batch_norm() {
            fold_batchnorm(&ck.graph, &ck.params)?
        } else {
            (ck.graph.clone(), ck.params.clone())
        };
        Self::new(graph, params, ck.taxonomy.clone())
    }

    /// Verify every intermediate activation is finite.
    pub fn with_checked(mut self, checked: bool) -> Self {
        self.checked = checked;
        self
    }

    pub fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    pub fn params(&self) -> &ParameterSet<f32> {
        &self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.graph.parameter_count()
    }

    /// The folded model as a checkpoint.
    pub fn to_checkpoint(&self, meta: super::CheckpointMeta) -> Result<Checkpoint> {
        let meta = super::CheckpointMeta { folded: true, ..meta };
        Checkpoint::new(self.graph.clone(), self.params.clone(), self.taxonomy.clone(), meta)
    }

    pub fn predict(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        if self.checked {
            forward_checked(&self.graph, &self.params, batch, Mode::Infer)
        } else {
            forward(&self.graph, &self.params, batch, Mode::Infer)
        }
    }
}

impl Classifier for InferenceEngine {
    fn classify(&self, frame: &ImageTensor) -> Result<ClassPrediction> {
        infer_frame(self, frame)
    }

    fn taxonomy(&self) -> &ClassTaxonomy {
        &self.taxonomy
    }
}

fn frame_tensor(graph: &ModelGraph, frame: &ImageTensor) -> Result<Tensor<f32>> {
    let (w, h) = (graph.input.width, graph.input.height);
    let mut data = Vec::with_capacity(3 * w * h);
    if frame.width() == w && frame.height() == h {
        frame.write_chw_normalized(&mut data);
    } else {
        resize_to(frame, w, h)?.write_chw_normalized(&mut data);
    }
    Tensor::new(vec![1, 3, h, w], data)
}

/// Classifies one frame, resizing it to the engine input when needed.
/// `latency_ms` covers resize and forward pass.
pub fn infer_frame(engine: &InferenceEngine, frame: &ImageTensor) -> Result<ClassPrediction> {
    let start = Instant::now();
    let x = frame_tensor(&engine.graph, frame)?;
    let probs = engine.predict(&x)?.into_data();
    let ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(ClassPrediction::from_probabilities(probs, &engine.taxonomy, ms))
}

/// The unfolded trained model in infer mode; a reference for the engine.
#[derive(Debug, Clone)]
pub struct ReferenceModel {
    pub checkpoint: Checkpoint,
}

impl Classifier for ReferenceModel {
    fn classify(&self, frame: &ImageTensor) -> Result<ClassPrediction> {
        let start = Instant::now();
        let x = frame_tensor(&self.checkpoint.graph, frame)?;
        let probs = forward(&self.checkpoint.graph, &self.checkpoint.params, &x, Mode::Infer)?.into_data();
        let ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(ClassPrediction::from_probabilities(probs, &self.checkpoint.taxonomy, ms))
    }

    fn taxonomy(&self) -> &ClassTaxonomy {
        &self.checkpoint.taxonomy
    }
}

/// Always predicts one class after an optional real delay.
#[derive(Debug, Clone)]
pub struct StubClassifier {
    pub class_id: usize,
    pub delay: Duration,
    pub taxonomy: ClassTaxonomy,
}

impl Classifier for StubClassifier {
    fn classify(&self, _frame: &ImageTensor) -> Result<ClassPrediction> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let mut probs = vec![0.01f32; self.taxonomy.len()];
        probs[self.class_id] = 0.99;
        Ok(ClassPrediction::from_probabilities(
            probs,
            &self.taxonomy,
            self.delay.as_secs_f64() * 1e3,
        ))
    }

    fn taxonomy(&self) -> &ClassTaxonomy {
        &self.taxonomy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_micro_mobilenet, InputSpec};

    fn engine() -> (Checkpoint, InferenceEngine) {
        let (g, p) = build_micro_mobilenet(0.25, 16, InputSpec::default(), 3).unwrap();
        let ck = Checkpoint::new(g, p, ClassTaxonomy::aiweeds(), Default::default()).unwrap();
        let e = InferenceEngine::from_checkpoint(&ck).unwrap();
        (ck, e)
    }

    #[test]
    fn zeroed_head_ties_to_lowest_id() {
        let (mut ck, _) = engine();
        ck.params.get_mut("classifier.weight").unwrap().data_mut().fill(0.0);
        ck.params.get_mut("classifier.bias").unwrap().data_mut().fill(0.0);
        let e = InferenceEngine::from_checkpoint(&ck).unwrap();
        let frame = ImageTensor::filled(384, 224, [90, 120, 60]);
        let p = infer_frame(&e, &frame).unwrap();
        assert!(p.probabilities.iter().all(|v| *v == 0.5));
        assert_eq!(p.class_id, 0);
        assert_eq!(p.class_name, "AS.");
    }

    #[test]
    fn repeatable_and_resizes() {
        let (ck, e) = engine();
        let frame = ImageTensor::from_fn(640, 360, |x, y| [(x % 256) as u8, (y % 256) as u8, 77]);
        let a = infer_frame(&e, &frame).unwrap();
        let b = infer_frame(&e, &frame).unwrap();
        assert_eq!(a.probabilities, b.probabilities);
        assert_eq!(a.class_id, argmax(&a.probabilities));
        assert!(e.parameter_count() < ck.graph.parameter_count());
        let r = ReferenceModel { checkpoint: ck }.classify(&frame).unwrap();
        for (x, y) in r.probabilities.iter().zip(&a.probabilities) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_unfolded_graph() {
        let (ck, _) = engine();
        assert!(InferenceEngine::new(ck.graph, ck.params, ck.taxonomy).is_err());
    }
}
