use std::fmt;

use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_init: f64,
    pub halve_patience: usize,
    pub abort_patience: usize,
    pub restart_lr: f64,
    pub max_epochs: usize,
    pub max_restarts: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub bn_momentum: f64,
    /// Stop once validation average class accuracy reaches this value.
    pub stop_at_val_acc: Option<f64>,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            lr_init: 1e-4,
            halve_patience: 16,
            abort_patience: 32,
            restart_lr: 0.5e-4,
            max_epochs: 100,
            max_restarts: 1,
            adam: AdamConfig::default(),
            seed: 0,
            bn_momentum: crate::nn::BN_MOMENTUM,
            stop_at_val_acc: None,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.halve_patience > 0 && self.halve_patience < self.abort_patience) {
            return bad(format!(
                "need 0 < halve_patience ({}) < abort_patience ({})",
                self.halve_patience, self.abort_patience
            ));
        }
        if !(self.lr_init > 0.0 && self.restart_lr > 0.0) || !self.lr_init.is_finite() || !self.restart_lr.is_finite() {
            return bad("learning rates must be positive".into());
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return bad(format!("bn_momentum {} outside [0, 1)", self.bn_momentum));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerAction {
    Continue,
    HalveLr,
    Abort,
}

impl fmt::Display for SchedulerAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulerAction::Continue => "continue",
            SchedulerAction::HalveLr => "halve_lr",
            SchedulerAction::Abort => "abort",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerState {
    pub best_val_loss: f64,
    pub epochs_since_improve: usize,
    pub current_lr: f64,
    pub epoch: usize,
    pub restarts_done: usize,
}

impl SchedulerState {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            best_val_loss: f64::INFINITY,
            epochs_since_improve: 0,
            current_lr: cfg.lr_init,
            epoch: 0,
            restarts_done: 0,
        }
    }

    /// After an abort: restart learning rate, fresh stale counter.
    pub fn restart(&mut self, cfg: &TrainConfig) {
        self.current_lr = cfg.restart_lr;
        self.epochs_since_improve = 0;
        self.restarts_done += 1;
    }
}

/// Feeds one epoch's validation loss. Improvement means strictly below the
/// best so far. The stale counter runs from the last improvement; it halves
/// the rate at every multiple of `halve_patience` below `abort_patience`
/// and aborts on reaching `abort_patience`.
pub fn scheduler_update(state: &mut SchedulerState, cfg: &TrainConfig, val_loss: f64) -> Result<SchedulerAction> {
    if !val_loss.is_finite() {
        return Err(Error::NonFinite(format!("validation loss {val_loss}")));
    }
    state.epoch += 1;
    if val_loss < state.best_val_loss {
        state.best_val_loss = val_loss;
        state.epochs_since_improve = 0;
        return Ok(SchedulerAction::Continue);
    }
    state.epochs_since_improve += 1;
    let stale = state.epochs_since_improve;
    if stale >= cfg.abort_patience {
        Ok(SchedulerAction::Abort)
    } else if stale % cfg.halve_patience == 0 {
        state.current_lr /= 2.0;
        Ok(SchedulerAction::HalveLr)
    } else {
        Ok(SchedulerAction::Continue)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(losses: &[f64]) -> (Vec<SchedulerAction>, SchedulerState) {
        let cfg = TrainConfig::default();
        let mut s = SchedulerState::new(&cfg);
        let actions = losses.iter().map(|l| scheduler_update(&mut s, &cfg, *l).unwrap()).collect();
        (actions, s)
    }

    #[test]
    fn decreasing_losses_continue() {
        let losses: Vec<f64> = (0..20).map(|i| 1.0 - i as f64 * 0.01).collect();
        let (a, s) = run(&losses);
        assert!(a.iter().all(|x| *x == SchedulerAction::Continue));
        assert_eq!(s.current_lr, 1e-4);
    }

    #[test]
    fn halves_at_sixteen_and_aborts_at_thirty_two() {
        let mut losses = vec![1.0];
        losses.extend(std::iter::repeat(1.0).take(32));
        let (a, s) = run(&losses);
        for (i, act) in a.iter().enumerate() {
            let want = match i {
                16 => SchedulerAction::HalveLr,
                32 => SchedulerAction::Abort,
                _ => SchedulerAction::Continue,
            };
            assert_eq!(*act, want, "epoch index {i}");
        }
        assert_eq!(s.current_lr, 5e-5);
        assert_eq!(s.best_val_loss, 1.0);
    }

    #[test]
    fn equal_loss_is_not_improvement() {
        let (_, s) = run(&[0.5, 0.5, 0.5]);
        assert_eq!(s.epochs_since_improve, 2);
    }

    #[test]
    fn restart_sets_exact_rate() {
        let cfg = TrainConfig::default();
        let mut s = SchedulerState::new(&cfg);
        s.current_lr = 1.25e-5;
        s.epochs_since_improve = 32;
        s.restart(&cfg);
        assert_eq!(s.current_lr, 0.5e-4);
        assert_eq!(s.epochs_since_improve, 0);
        assert_eq!(s.restarts_done, 1);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.halve_patience = 32;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            lr_init: 0.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(scheduler_update(&mut SchedulerState::new(&c), &c, f64::NAN).is_err());
    }
}
