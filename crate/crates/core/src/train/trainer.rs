use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::loss::{bce_loss, one_hot};
use super::scheduler::{scheduler_update, SchedulerAction, SchedulerState, TrainConfig};
use crate::data::{Manifest, Role, Sample, SplitAssignment};
use crate::deploy::{Checkpoint, CheckpointMeta};
use crate::error::{Error, Result};
use crate::eval::{argmax, avg_class_accuracy, ConfusionMatrix};
use crate::imageops::{augment, resize_to, AugmentationPolicy, ImageTensor};
use crate::nn::{backward_from, forward, forward_train, update_running_stats, Mode, ModelGraph, ParameterSet, Tensor};
use crate::seed;

const SHUFFLE_STREAM: u64 = 0;
const AUGMENT_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_avg_class_acc: f64,
    /// Rate used during this epoch.
    pub lr: f64,
    /// `continue`, `halve_lr`, `abort` or `abort_restart`.
    pub action: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.records.iter().map(|r| r.val_loss).reduce(f64::min)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.records.is_empty() {
            w.write_record(["epoch", "train_loss", "val_loss", "val_avg_class_acc", "lr", "action"])?;
        }
        for r in &self.records {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv()?.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let records = r.deserialize().collect::<std::result::Result<Vec<EpochRecord>, _>>()?;
        Ok(Self { records })
    }
}

/// What the epoch loop needs from a model; stubbed in scheduler tests.
pub trait EpochRunner {
    /// One pass over the training set at `lr`; returns mean training loss.
    fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<f64>;
    /// Validation loss and average class accuracy.
    fn validate(&mut self) -> Result<(f64, f64)>;
    /// Called whenever validation loss improves strictly.
    fn save_best(&mut self, epoch: usize, val_loss: f64, val_acc: f64);
    /// Restores the last saved best state and resets optimizer state.
    fn restore_best(&mut self) -> Result<()>;
}

/// Epoch loop with the halve / abort / restart schedule.
pub fn run_schedule(
    cfg: &TrainConfig,
    runner: &mut dyn EpochRunner,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainLog> {
    cfg.validate()?;
    let mut state = SchedulerState::new(cfg);
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.max_epochs {
        let lr = state.current_lr;
        let train_loss = runner.train_epoch(epoch, lr)?;
        let (val_loss, val_acc) = runner.validate()?;
        for (what, v) in [("training loss", train_loss), ("validation loss", val_loss)] {
            if !v.is_finite() {
                log::error!("diverged at epoch {epoch}; log so far:\n{}", log.to_csv().unwrap_or_default());
                return Err(Error::Divergence {
                    epoch,
                    msg: format!("{what} is {v}"),
                });
            }
        }
        let improved = val_loss < state.best_val_loss;
        let action = scheduler_update(&mut state, cfg, val_loss)?;
        if improved {
            runner.save_best(epoch, val_loss, val_acc);
        }
        let mut label = action.to_string();
        let mut stop = false;
        if action == SchedulerAction::Abort {
            if state.restarts_done < cfg.max_restarts {
                runner.restore_best()?;
                state.restart(cfg);
                label = "abort_restart".into();
            } else {
                stop = true;
            }
        }
        let rec = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_avg_class_acc: val_acc,
            lr,
            action: label,
        };
        log::info!(
            "epoch {epoch}: train {train_loss:.5} val {val_loss:.5} acc {val_acc:.4} lr {lr:e} {}",
            rec.action
        );
        on_epoch(&rec);
        log.records.push(rec);
        if stop || cfg.stop_at_val_acc.is_some_and(|t| val_acc >= t) {
            break;
        }
    }
    Ok(log)
}

/// Sample access for training paths; test-role samples are refused.
pub fn fetch_training_sample<'a>(manifest: &'a Manifest, split: &SplitAssignment, idx: usize) -> Result<&'a Sample> {
    if split.role(idx) == Role::Test {
        return Err(Error::TestLeak(idx));
    }
    manifest
        .samples()
        .get(idx)
        .ok_or_else(|| Error::InvalidArgument(format!("sample index {idx} out of range")))
}

/// A sample resized to the model input, with its manifest index and class.
#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub index: usize,
    pub class_id: usize,
    pub image: ImageTensor,
}

/// Loads and resizes every sample of `role` (train or val) in manifest order.
pub fn load_role(manifest: &Manifest, split: &SplitAssignment, role: Role, width: usize, height: usize) -> Result<Vec<LoadedSample>> {
    load_indices(manifest, split, role, width, height, |idx| fetch_training_sample(manifest, split, idx))
}

/// Loads the held-out test role. For final evaluation only; nothing on the
/// training path calls this.
pub fn load_test_set(manifest: &Manifest, split: &SplitAssignment, width: usize, height: usize) -> Result<Vec<LoadedSample>> {
    load_indices(manifest, split, Role::Test, width, height, |idx| {
        manifest
            .samples()
            .get(idx)
            .ok_or_else(|| Error::InvalidArgument(format!("sample index {idx} out of range")))
    })
}

fn load_indices<'a>(
    manifest: &'a Manifest,
    split: &SplitAssignment,
    role: Role,
    width: usize,
    height: usize,
    fetch: impl Fn(usize) -> Result<&'a Sample> + Sync,
) -> Result<Vec<LoadedSample>> {
    if split.len() != manifest.len() {
        return Err(Error::InvalidArgument(format!(
            "split covers {} samples, manifest has {}",
            split.len(),
            manifest.len()
        )));
    }
    split
        .indices(role)
        .into_par_iter()
        .map(|idx| {
            let s = fetch(idx)?;
            Ok(LoadedSample {
                index: idx,
                class_id: s.class_id,
                image: resize_to(&s.load()?, width, height)?,
            })
        })
        .collect()
}

/// `N x C x H x W` batch from images already at model resolution.
pub fn batch_tensor(images: &[&ImageTensor]) -> Result<Tensor<f32>> {
    let first = images.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(images.len() * 3 * w * h);
    for img in images {
        if (img.width(), img.height()) != (w, h) {
            return Err(Error::InvalidArgument("batch images differ in size".into()));
        }
        img.write_chw_normalized(&mut data);
    }
    Tensor::new(vec![images.len(), 3, h, w], data)
}

/// Validation loss and confusion matrix for a sample set in infer mode.
pub fn evaluate_samples(
    graph: &ModelGraph,
    params: &ParameterSet<f32>,
    samples: &[LoadedSample],
    batch_size: usize,
) -> Result<(f64, ConfusionMatrix)> {
    let mut cm = ConfusionMatrix::new(graph.num_classes);
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let imgs: Vec<&ImageTensor> = chunk.iter().map(|s| &s.image).collect();
        let labels: Vec<usize> = chunk.iter().map(|s| s.class_id).collect();
        let probs = forward(graph, params, &batch_tensor(&imgs)?, Mode::Infer)?;
        let (loss, _) = bce_loss(&probs, &one_hot(&labels, graph.num_classes)?)?;
        total += loss * chunk.len() as f64;
        for (row, &t) in probs.data().chunks_exact(graph.num_classes).zip(&labels) {
            cm.add(t, argmax(row))?;
        }
    }
    Ok((total / samples.len().max(1) as f64, cm))
}

struct ModelRunner<'a> {
    graph: &'a ModelGraph,
    cfg: &'a TrainConfig,
    policy: &'a AugmentationPolicy,
    params: ParameterSet<f32>,
    adam: AdamState,
    train: Vec<LoadedSample>,
    val: Vec<LoadedSample>,
    best: Option<(ParameterSet<f32>, CheckpointMeta)>,
}

impl ModelRunner<'_> {
    fn fresh_adam(&self) -> Result<AdamState> {
        let mut trainable = ParameterSet::new();
        for s in self.graph.param_specs() {
            if s.role == crate::nn::ParamRole::Trainable {
                trainable.insert(s.name.clone(), self.params.get(&s.name)?.clone())?;
            }
        }
        Ok(AdamState::new(&trainable))
    }
}

impl EpochRunner for ModelRunner<'_> {
    fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<f64> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut seed::derived_rng(self.cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let nc = self.graph.num_classes;
        let mut total = 0.0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let images: Vec<ImageTensor> = chunk
                .par_iter()
                .map(|&pos| {
                    let s = &self.train[pos];
                    if self.cfg.augment {
                        let seed = seed::derive(self.cfg.seed, &[AUGMENT_STREAM, epoch as u64, s.index as u64]);
                        augment(&s.image, self.policy, seed)
                    } else {
                        Ok(s.image.clone())
                    }
                })
                .collect::<Result<_>>()?;
            let refs: Vec<&ImageTensor> = images.iter().collect();
            let labels: Vec<usize> = chunk.iter().map(|&p| self.train[p].class_id).collect();
            let x = batch_tensor(&refs)?;
            let trace = forward_train(self.graph, &self.params, &x).map_err(|e| diverged(epoch, e))?;
            let (loss, d) = bce_loss(trace.output(), &one_hot(&labels, nc)?)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    msg: format!("batch loss {loss}"),
                });
            }
            let grads = backward_from(self.graph, &self.params, &trace, &d)?;
            adam_step(&mut self.params, &grads, &mut self.adam, lr, &self.cfg.adam).map_err(|e| diverged(epoch, e))?;
            update_running_stats(&mut self.params, &trace, self.cfg.bn_momentum)?;
            total += loss * chunk.len() as f64;
        }
        Ok(total / self.train.len() as f64)
    }

    fn validate(&mut self) -> Result<(f64, f64)> {
        let (loss, cm) = evaluate_samples(self.graph, &self.params, &self.val, self.cfg.batch_size)?;
        Ok((loss, avg_class_accuracy(&cm)))
    }

    fn save_best(&mut self, epoch: usize, val_loss: f64, val_acc: f64) {
        let meta = CheckpointMeta {
            epoch,
            val_loss: Some(val_loss),
            val_avg_class_acc: Some(val_acc),
            seed: Some(self.cfg.seed),
            folded: false,
        };
        self.best = Some((self.params.clone(), meta));
    }

    fn restore_best(&mut self) -> Result<()> {
        if let Some((p, _)) = &self.best {
            self.params = p.clone();
        }
        self.adam = self.fresh_adam()?;
        Ok(())
    }
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(msg) => Error::Divergence { epoch, msg },
        other => other,
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss seen.
    pub best: Checkpoint,
    /// Parameters at the end of the last epoch.
    pub last: ParameterSet<f32>,
    pub log: TrainLog,
}

/// Trains `params` on the train role of `split`, selecting by validation
/// loss. Test-role samples are never loaded.
pub fn train(
    manifest: &Manifest,
    split: &SplitAssignment,
    graph: &ModelGraph,
    params: ParameterSet<f32>,
    cfg: &TrainConfig,
    policy: &AugmentationPolicy,
) -> Result<TrainOutcome> {
    train_with_observer(manifest, split, graph, params, cfg, policy, &mut |_| {})
}

/// [`train`] with a callback after every epoch, e.g. to stream the log.
pub fn train_with_observer(
    manifest: &Manifest,
    split: &SplitAssignment,
    graph: &ModelGraph,
    params: ParameterSet<f32>,
    cfg: &TrainConfig,
    policy: &AugmentationPolicy,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    policy.validate()?;
    graph.validate()?;
    crate::deploy::check_params(graph, &params)?;
    if graph.num_classes != manifest.taxonomy().len() {
        return Err(Error::InvalidArgument(format!(
            "graph predicts {} classes, taxonomy has {}",
            graph.num_classes,
            manifest.taxonomy().len()
        )));
    }
    let initial = CheckpointMeta {
        seed: Some(cfg.seed),
        ..CheckpointMeta::default()
    };
    if cfg.max_epochs == 0 {
        return Ok(TrainOutcome {
            best: Checkpoint::new(graph.clone(), params.clone(), manifest.taxonomy().clone(), initial)?,
            last: params,
            log: TrainLog::default(),
        });
    }
    let (w, h) = (graph.input.width, graph.input.height);
    let train_set = load_role(manifest, split, Role::Train, w, h)?;
    let val_set = load_role(manifest, split, Role::Val, w, h)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("split needs non-empty train and val roles".into()));
    }
    let mut runner = ModelRunner {
        graph,
        cfg,
        policy,
        adam: AdamState::new(&ParameterSet::new()),
        params,
        train: train_set,
        val: val_set,
        best: None,
    };
    runner.adam = runner.fresh_adam()?;
    let log = run_schedule(cfg, &mut runner, on_epoch)?;
    let (best_params, meta) = runner.best.clone().unwrap_or_else(|| (runner.params.clone(), initial));
    Ok(TrainOutcome {
        best: Checkpoint::new(graph.clone(), best_params, manifest.taxonomy().clone(), meta)?,
        last: runner.params,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Replays a scripted validation-loss sequence.
    struct Scripted {
        losses: Vec<f64>,
        next: usize,
        restores: Vec<usize>,
        saves: Vec<usize>,
    }

    impl EpochRunner for Scripted {
        fn train_epoch(&mut self, _epoch: usize, _lr: f64) -> Result<f64> {
            Ok(1.0)
        }
        fn validate(&mut self) -> Result<(f64, f64)> {
            let l = self.losses[self.next];
            self.next += 1;
            Ok((l, 0.5))
        }
        fn save_best(&mut self, epoch: usize, _: f64, _: f64) {
            self.saves.push(epoch);
        }
        fn restore_best(&mut self) -> Result<()> {
            self.restores.push(self.next);
            Ok(())
        }
    }

    fn scripted(losses: Vec<f64>) -> Scripted {
        Scripted {
            losses,
            next: 0,
            restores: vec![],
            saves: vec![],
        }
    }

    #[test]
    fn trace_halve_abort_restart() {
        let mut losses = vec![1.0];
        losses.extend(std::iter::repeat(2.0).take(32));
        losses.extend(std::iter::repeat(2.0).take(32));
        let cfg = TrainConfig {
            max_epochs: 200,
            ..TrainConfig::default()
        };
        let mut s = scripted(losses);
        let log = run_schedule(&cfg, &mut s, &mut |_| {}).unwrap();
        assert_eq!(log.records.len(), 65);
        let r = &log.records;
        assert_eq!(r[16].action, "halve_lr");
        assert_eq!(r[16].lr, 1e-4);
        assert_eq!(r[17].lr, 5e-5);
        assert_eq!(r[32].action, "abort_restart");
        assert_eq!(r[33].lr, 0.5e-4);
        assert_eq!(r[48].action, "halve_lr");
        assert_eq!(r[49].lr, 0.25e-4);
        assert_eq!(r[64].action, "abort");
        assert_eq!(s.saves, vec![1]);
        assert_eq!(s.restores, vec![33]);
        let others = r.iter().filter(|x| x.action == "continue").count();
        assert_eq!(others, 61);
    }

    #[test]
    fn csv_round_trip() {
        let mut s = scripted(vec![0.9, 0.8, 0.85]);
        let cfg = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let log = run_schedule(&cfg, &mut s, &mut |_| {}).unwrap();
        let csv = log.to_csv().unwrap();
        assert!(csv.starts_with("epoch,train_loss,val_loss,val_avg_class_acc,lr,action\n"));
        assert_eq!(TrainLog::from_csv(&csv).unwrap(), log);
        assert_eq!(log.best_val_loss(), Some(0.8));
    }

    #[test]
    fn nan_loss_diverges() {
        let mut s = scripted(vec![0.9, f64::NAN]);
        let cfg = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let err = run_schedule(&cfg, &mut s, &mut |_| {}).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 2, .. }));
    }

    #[test]
    fn stop_at_accuracy() {
        let mut s = scripted(vec![0.9, 0.8, 0.7]);
        let cfg = TrainConfig {
            max_epochs: 3,
            stop_at_val_acc: Some(0.5),
            ..TrainConfig::default()
        };
        assert_eq!(run_schedule(&cfg, &mut s, &mut |_| {}).unwrap().records.len(), 1);
    }
}
