use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParameterSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for every parameter that receives gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParameterSet<f32>,
    pub v: ParameterSet<f32>,
    pub t: u64,
}

impl AdamState {
    /// Zero moments shaped like `grads_like` (the trainable parameters).
    pub fn new(grads_like: &ParameterSet<f32>) -> Self {
        Self {
            m: grads_like.zeros_like(),
            v: grads_like.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of every parameter named in `grads`.
/// Arithmetic is done in `f64` and stored as `f32`.
pub fn adam_step(
    params: &mut ParameterSet<f32>,
    grads: &ParameterSet<f32>,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.all_finite()) {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (name, g) in grads.iter() {
        let p = params.get_mut(name)?;
        let m = state.m.get_mut(name)?;
        if p.shape() != g.shape() || m.shape() != g.shape() {
            return Err(Error::TensorMismatch {
                name: name.to_string(),
                msg: format!("gradient shape {:?} vs parameter {:?}", g.shape(), p.shape()),
            });
        }
        let v = state.v.get_mut(name)?;
        for (((p, m), v), &g) in p
            .data_mut()
            .iter_mut()
            .zip(m.data_mut())
            .zip(v.data_mut())
            .zip(g.data())
        {
            let g = g as f64;
            let mn = cfg.beta1 * *m as f64 + (1.0 - cfg.beta1) * g;
            let vn = cfg.beta2 * *v as f64 + (1.0 - cfg.beta2) * g * g;
            *m = mn as f32;
            *v = vn as f32;
            let mhat = mn / c1;
            let vhat = vn / c2;
            *p = (*p as f64 - lr * mhat / (vhat.sqrt() + cfg.eps)) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::nn::Tensor;

    fn scalar(v: f32) -> ParameterSet<f32> {
        let mut p = ParameterSet::new();
        p.insert("w", Tensor::full(&[1], v)).unwrap();
        p
    }

    #[test]
    fn first_step_by_hand() {
        let mut p = scalar(1.0);
        let g = scalar(1.0);
        let mut s = AdamState::new(&g);
        adam_step(&mut p, &g, &mut s, 1e-4, &AdamConfig::default()).unwrap();
        assert_eq!(s.t, 1);
        assert_relative_eq!(s.m.get("w").unwrap().data()[0], 0.1, epsilon = 1e-7);
        assert_relative_eq!(s.v.get("w").unwrap().data()[0], 0.001, epsilon = 1e-9);
        let want = (1.0f64 - 1e-4 / (1.0 + 1e-8)) as f32;
        assert_eq!(p.get("w").unwrap().data()[0], want);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = scalar(0.25);
        let g = scalar(0.0);
        let mut s = AdamState::new(&g);
        adam_step(&mut p, &g, &mut s, 1e-3, &AdamConfig::default()).unwrap();
        assert_eq!(p.get("w").unwrap().data()[0], 0.25);
        assert_eq!(s.t, 1);
    }

    /// Independent scalar Adam written from the recurrences.
    fn oracle(theta: f64, grads: &[f64], lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut th, mut m, mut v) = (theta, 0.0, 0.0);
        for (i, g) in grads.iter().enumerate() {
            let t = (i + 1) as f64;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            th -= lr * (m / (1.0 - b1.powf(t))) / ((v / (1.0 - b2.powf(t))).sqrt() + eps);
        }
        th
    }

    #[test]
    fn matches_scalar_oracle() {
        let grads = [0.5, 0.5, -1.5, 2.0, 0.01];
        let mut p = scalar(0.3);
        let mut s = AdamState::new(&scalar(0.0));
        for g in grads {
            adam_step(&mut p, &scalar(g as f32), &mut s, 1e-2, &AdamConfig::default()).unwrap();
        }
        assert_relative_eq!(p.get("w").unwrap().data()[0] as f64, oracle(0.3, &grads, 1e-2), epsilon = 1e-6);
        assert_eq!(s.t, 5);
    }

    #[test]
    fn nan_gradient_is_rejected() {
        let mut p = scalar(1.0);
        let mut s = AdamState::new(&scalar(0.0));
        let err = adam_step(&mut p, &scalar(f32::NAN), &mut s, 1e-3, &AdamConfig::default()).unwrap_err();
        assert!(err.to_string().contains('w'));
        assert_eq!(p.get("w").unwrap().data()[0], 1.0);
    }
}
