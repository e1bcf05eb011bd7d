//! Classify-then-spray controller and field-run accounting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::world::{dominant_patch, render_frame, FieldMap, RobotState};
use crate::data::ClassTaxonomy;
use crate::deploy::{run_pipeline, ClassPrediction, Classifier, Clock, FrameResult, PipelineConfig};
use crate::error::{Error, Result};
use crate::eval::{confusion_matrix, overall_accuracy, ConfusionMatrix};
use crate::imageops::ImageTensor;

/// Sprayer flux, ml per minute of spraying.
pub const SPRAYER_FLUX_ML_PER_MIN: f64 = 78.0;
/// Commercial two-sprayer system, ml per minute, for the baseline column.
pub const BASELINE_FLUX_ML_PER_MIN: f64 = 95.6;
/// Inference time assumed by the virtual clock unless overridden.
pub const REFERENCE_INFER_MS: f64 = 47.78;
/// Gimbal yaw pointing straight down the camera axis.
pub const NOMINAL_YAW_DEG: f64 = 75.0;
pub const MAX_YAW_DEG: f64 = 150.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprayPolicy {
    pub threshold: f32,
    pub pulse_s: f64,
    pub crop_class_id: usize,
    pub negative_class_id: usize,
}

impl SprayPolicy {
    pub fn new(taxonomy: &ClassTaxonomy, threshold: f32) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidArgument(format!("spray threshold {threshold} outside [0, 1]")));
        }
        Ok(Self {
            threshold,
            pulse_s: 0.1,
            crop_class_id: taxonomy.crop_class_id(),
            negative_class_id: taxonomy.negative_class_id(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprayCommand {
    pub spray: bool,
    pub target_yaw: f64,
    pub duration_s: f64,
}

/// Spray any confidently predicted weed; never crop or background.
///
/// `target_bearing_deg` is where the gimbal must point to hit the frame
/// centre; it is clamped to the mechanical range.
pub fn spray_decide(prediction: &ClassPrediction, policy: &SprayPolicy, target_bearing_deg: f64) -> SprayCommand {
    let weed = prediction.class_id != policy.crop_class_id && prediction.class_id != policy.negative_class_id;
    let spray = weed && prediction.probability >= policy.threshold;
    let yaw = if target_bearing_deg.is_nan() {
        NOMINAL_YAW_DEG
    } else {
        target_bearing_deg.clamp(0.0, MAX_YAW_DEG)
    };
    SprayCommand {
        spray,
        target_yaw: yaw,
        duration_s: if spray { policy.pulse_s.max(0.0) } else { 0.0 },
    }
}

/// Bearing to a target seen `delay_s` ago, after the robot moved on.
pub fn target_bearing(robot: &RobotState, delay_s: f64) -> f64 {
    let back = robot.speed_mps * delay_s;
    NOMINAL_YAW_DEG + (-back / robot.camera_height_m).atan().to_degrees()
}

/// Where predictions come from.
#[derive(Clone, Copy)]
pub enum Perception<'a> {
    /// Ground truth passed straight through; isolates the controller.
    Oracle,
    Model(&'a dyn Classifier),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub fps: f64,
    /// Virtual inference time per frame.
    pub service_ms: f64,
    pub queue_capacity: usize,
    pub camera_height_m: f64,
    pub tank_ml: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            fps: 10.0,
            service_ms: REFERENCE_INFER_MS,
            queue_capacity: 1,
            camera_height_m: 0.3,
            tank_ml: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    /// Virtual time the decision was made, seconds.
    pub t: f64,
    pub frame_index: usize,
    pub position_m: f64,
    pub ground_truth: usize,
    pub prediction: usize,
    pub probability: f32,
    pub sprayed: bool,
    pub target_yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: String,
    pub frames: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub distance_m: f64,
    pub run_time_s: f64,
    pub frames_acquired: usize,
    pub frames_processed: usize,
    pub frames_dropped: usize,
    /// Frame-level detection accuracy for every class that occurred.
    pub per_class_accuracy: Vec<ClassAccuracy>,
    pub frame_accuracy: Option<f64>,
    /// Weed patches that were the subject of at least one acquired frame.
    pub weeds_seen: usize,
    pub weeds_sprayed: usize,
    pub weeds_missed: usize,
    /// Fraction of seen patches whose majority-vote class is right.
    pub per_patch_accuracy: Option<f64>,
    pub spray_commands: usize,
    /// Sprays aimed at crop or background frames.
    pub false_sprays: usize,
    pub sprays_skipped_empty_tank: usize,
    pub spray_time_s: f64,
    pub herbicide_ml: f64,
    /// Continuous spraying over the whole run at the commercial flux.
    pub baseline_ml: f64,
    pub tank_remaining_ml: f64,
    pub service_ms: f64,
    pub events: Vec<SimEvent>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Event log as CSV: `t,ground_truth,prediction,sprayed`.
    pub fn events_csv(&self, taxonomy: &ClassTaxonomy) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "ground_truth", "prediction", "sprayed"])?;
        for e in &self.events {
            w.write_record([
                format!("{:.3}", e.t),
                taxonomy.short_name(e.ground_truth).to_string(),
                taxonomy.short_name(e.prediction).to_string(),
                e.sprayed.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Other(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Other(e.to_string()))
    }

    pub fn write(&self, json_path: &Path, csv_path: &Path, taxonomy: &ClassTaxonomy) -> Result<()> {
        std::fs::write(json_path, self.to_json()?).map_err(|e| Error::io(json_path, e))?;
        std::fs::write(csv_path, self.events_csv(taxonomy)?).map_err(|e| Error::io(csv_path, e))?;
        Ok(())
    }

    /// Confusion matrix recomputed from the logged events.
    pub fn confusion(&self, num_classes: usize) -> Result<ConfusionMatrix> {
        let preds: Vec<usize> = self.events.iter().map(|e| e.prediction).collect();
        let truth: Vec<usize> = self.events.iter().map(|e| e.ground_truth).collect();
        confusion_matrix(num_classes, &preds, &truth)
    }
}

/// [`simulate_run_with`] with the default simulation settings.
pub fn simulate_run(
    field: &FieldMap,
    perception: Perception<'_>,
    policy: &SprayPolicy,
    speed_mps: f64,
    duration_s: f64,
    seed_value: u64,
) -> Result<RunReport> {
    simulate_run_with(field, perception, policy, speed_mps, duration_s, seed_value, &SimConfig::default())
}

/// Drives the robot down the row on a virtual clock: render, classify
/// through the bounded pipeline, decide, actuate, account.
///
/// The run stops after `duration_s` or at the end of the field,
/// whichever comes first.
pub fn simulate_run_with(
    field: &FieldMap,
    perception: Perception<'_>,
    policy: &SprayPolicy,
    speed_mps: f64,
    duration_s: f64,
    seed_value: u64,
    cfg: &SimConfig,
) -> Result<RunReport> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::InvalidArgument(format!("duration must be positive, got {duration_s}")));
    }
    if !(speed_mps >= 0.0 && speed_mps.is_finite()) {
        return Err(Error::InvalidArgument(format!("speed {speed_mps} m/s must be non-negative")));
    }
    let taxonomy = &field.taxonomy;
    if let Perception::Model(c) = perception {
        if c.taxonomy().len() != taxonomy.len() {
            return Err(Error::InvalidArgument(format!(
                "classifier has {} classes, field taxonomy {}",
                c.taxonomy().len(),
                taxonomy.len()
            )));
        }
    }
    let period_s = 1.0 / cfg.fps;
    let mut time_s = duration_s;
    if speed_mps > 0.0 {
        time_s = time_s.min(field.length_m / speed_mps);
    }
    let n_frames = (time_s / period_s + 1e-9).floor() as usize + 1;
    let base = RobotState::new(0.0, speed_mps, cfg.camera_height_m, cfg.tank_ml)?;
    let robots: Vec<RobotState> = (0..n_frames)
        .map(|i| RobotState {
            position_m: (i as f64 * period_s * speed_mps).min(field.length_m),
            ..base
        })
        .collect();
    let subject: Vec<Option<usize>> = robots.iter().map(|r| dominant_patch(field, r)).collect();
    let truth: Vec<usize> = subject
        .iter()
        .map(|s| s.map(|i| field.patches[i].class_id).unwrap_or(taxonomy.negative_class_id()))
        .collect();

    let pcfg = PipelineConfig {
        fps: cfg.fps,
        queue_capacity: cfg.queue_capacity,
        clock: Clock::Virtual {
            service_ms: cfg.service_ms,
        },
    };
    let oracle = OracleStandIn {
        taxonomy: taxonomy.clone(),
    };
    let mut results: Vec<FrameResult> = Vec::with_capacity(n_frames);
    let mut sink = |r: FrameResult| results.push(r);
    let stats = match perception {
        // the oracle never looks at pixels, so skip rendering
        Perception::Oracle => run_pipeline(
            (0..n_frames).map(|_| ImageTensor::filled(1, 1, [0, 0, 0])),
            &oracle,
            &mut sink,
            &pcfg,
        )?,
        Perception::Model(c) => {
            let mut err = None;
            let frames = robots.iter().map_while(|r| match render_frame(field, r, seed_value) {
                Ok((img, _)) => Some(img),
                Err(e) => {
                    err = Some(e);
                    None
                }
            });
            let s = run_pipeline(frames, c, &mut sink, &pcfg)?;
            if let Some(e) = err {
                return Err(e);
            }
            s
        }
    };

    let mut robot = base;
    let mut events = Vec::with_capacity(results.len());
    let mut sprayed_patch = vec![false; field.patches.len()];
    let mut votes = vec![vec![0u64; taxonomy.len()]; field.patches.len()];
    let (mut spray_commands, mut false_sprays, mut skipped) = (0, 0, 0);
    let mut spray_s = 0.0;
    let mut covered_until = f64::NEG_INFINITY;
    let flux_per_s = SPRAYER_FLUX_ML_PER_MIN / 60.0;
    for r in &results {
        let i = r.frame_index;
        let pred_id = match perception {
            Perception::Oracle => truth[i],
            Perception::Model(_) => r.prediction.class_id,
        };
        let prediction = match perception {
            Perception::Oracle => oracle.predict(truth[i]),
            Perception::Model(_) => r.prediction.clone(),
        };
        let t = r.done_ms / 1e3;
        robot.position_m = (t * speed_mps).min(field.length_m);
        let delay_s = (r.done_ms - r.arrival_ms) / 1e3;
        let cmd = spray_decide(&prediction, policy, target_bearing(&robot, delay_s));
        robot.set_yaw(cmd.target_yaw);
        let mut fired = false;
        if cmd.spray {
            spray_commands += 1;
            // overlapping pulses only extend the open valve
            let start = t.max(covered_until);
            let want = (t + cmd.duration_s - start).max(0.0);
            let have = robot.tank_remaining_ml / flux_per_s;
            if have <= 0.0 && want > 0.0 {
                skipped += 1;
            } else {
                let open = want.min(have);
                spray_s += open;
                robot.tank_remaining_ml = (robot.tank_remaining_ml - open * flux_per_s).max(0.0);
                covered_until = covered_until.max(start + open);
                fired = true;
                match subject[i] {
                    Some(p) => sprayed_patch[p] = true,
                    None => false_sprays += 1,
                }
            }
        }
        robot.sprayer_on = fired;
        if let Some(p) = subject[i] {
            votes[p][pred_id] += 1;
        }
        events.push(SimEvent {
            t,
            frame_index: i,
            position_m: robots[i].position_m,
            ground_truth: truth[i],
            prediction: pred_id,
            probability: prediction.probability,
            sprayed: fired,
            target_yaw: robot.gimbal_yaw_deg,
        });
    }

    let mut seen = vec![false; field.patches.len()];
    for p in subject.iter().flatten() {
        seen[*p] = true;
    }
    let weeds_seen = seen.iter().filter(|s| **s).count();
    let weeds_sprayed = (0..seen.len()).filter(|&p| seen[p] && sprayed_patch[p]).count();
    let judged: Vec<usize> = (0..seen.len()).filter(|&p| votes[p].iter().any(|v| *v > 0)).collect();
    let patch_correct = judged
        .iter()
        .filter(|&&p| crate::eval::argmax(&votes[p]) == field.patches[p].class_id)
        .count();

    let preds: Vec<usize> = events.iter().map(|e| e.prediction).collect();
    let labels: Vec<usize> = events.iter().map(|e| e.ground_truth).collect();
    let cm = confusion_matrix(taxonomy.len(), &preds, &labels)?;
    let per_class_accuracy = (0..taxonomy.len())
        .filter(|&c| cm.row_sum(c) > 0)
        .map(|c| ClassAccuracy {
            class: taxonomy.short_name(c).to_string(),
            frames: cm.row_sum(c),
            accuracy: cm.get(c, c) as f64 / cm.row_sum(c) as f64,
        })
        .collect();
    let run_time_s = n_frames as f64 * period_s;
    Ok(RunReport {
        distance_m: robots.last().map(|r| r.position_m).unwrap_or(0.0),
        run_time_s,
        frames_acquired: stats.frames_in,
        frames_processed: stats.frames_out,
        frames_dropped: stats.dropped,
        per_class_accuracy,
        frame_accuracy: (cm.total() > 0).then(|| overall_accuracy(&cm)),
        weeds_seen,
        weeds_sprayed,
        weeds_missed: weeds_seen - weeds_sprayed,
        per_patch_accuracy: (!judged.is_empty()).then(|| patch_correct as f64 / judged.len() as f64),
        spray_commands,
        false_sprays,
        sprays_skipped_empty_tank: skipped,
        spray_time_s: spray_s,
        herbicide_ml: SPRAYER_FLUX_ML_PER_MIN * (spray_s / 60.0),
        baseline_ml: BASELINE_FLUX_ML_PER_MIN * (run_time_s / 60.0),
        tank_remaining_ml: robot.tank_remaining_ml,
        service_ms: cfg.service_ms,
        events,
    })
}

/// Placeholder classifier for oracle runs; the real answer is substituted
/// from ground truth after the pipeline has scheduled the frame.
struct OracleStandIn {
    taxonomy: ClassTaxonomy,
}

impl OracleStandIn {
    fn predict(&self, class_id: usize) -> ClassPrediction {
        let mut probs = vec![0.0f32; self.taxonomy.len()];
        probs[class_id] = 1.0;
        ClassPrediction::from_probabilities(probs, &self.taxonomy, 0.0)
    }
}

impl Classifier for OracleStandIn {
    fn classify(&self, _frame: &ImageTensor) -> Result<ClassPrediction> {
        Ok(self.predict(self.taxonomy.negative_class_id()))
    }

    fn taxonomy(&self) -> &ClassTaxonomy {
        &self.taxonomy
    }
}
