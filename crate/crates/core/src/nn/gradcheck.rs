//! Central finite-difference gradient checking in `f64`.
//!
//! Uses the fourth-order central stencil
//! `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`; batch-norm makes the
//! loss curved enough that the two-point stencil's `h^2` truncation term
//! alone can exceed 1e-5 relative at `h = 1e-4`.

use super::exec::{backward_layers, forward_layers_train};
use super::graph::{Layer, ParamRole};
use super::params::ParameterSet;
use super::tensor::Tensor;
use crate::error::Result;

const STEPS: [f64; 4] = [2.0, 1.0, -1.0, -2.0];

/// Scalar loss on the model output and its gradient.
pub type LossFn<'a> = &'a dyn Fn(&Tensor<f64>) -> (f64, Tensor<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates whose perturbation crossed a ReLU6 kink.
    pub skipped: usize,
    pub max_rel_error: f64,
    /// Name and index of the coordinate with the largest error.
    pub worst: String,
}

impl GradCheckReport {
    pub fn skipped_fraction(&self) -> f64 {
        let total = self.checked + self.skipped;
        if total == 0 {
            0.0
        } else {
            self.skipped as f64 / total as f64
        }
    }
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares analytic gradients of `loss(layers(input))` (train mode)
/// against central differences for every trainable parameter, and for the
/// input when `check_input` is set. `stride` > 1 checks every stride-th
/// coordinate of each tensor.
pub fn check_gradients(
    layers: &[Layer],
    params: &ParameterSet<f64>,
    input: &Tensor<f64>,
    loss: LossFn<'_>,
    eps: f64,
    check_input: bool,
    stride: usize,
) -> Result<GradCheckReport> {
    let stride = stride.max(1);
    let trace = forward_layers_train(layers, params, input.clone())?;
    let base_pattern = trace.relu_pattern();
    let (_, d_out) = loss(trace.output());
    let (grads, dx) = backward_layers(layers, params, &trace, &d_out, check_input)?;

    let eval = |p: &ParameterSet<f64>, x: &Tensor<f64>| -> Result<Option<f64>> {
        let t = forward_layers_train(layers, p, x.clone())?;
        if t.relu_pattern() != base_pattern {
            return Ok(None);
        }
        Ok(Some(loss(t.output()).0))
    };

    let mut report = GradCheckReport {
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
        worst: String::new(),
    };
    let mut record = |name: &str, i: usize, analytic: f64, f: [Option<f64>; 4]| match f {
        [Some(p2), Some(p1), Some(m1), Some(m2)] => {
            let numeric = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * eps);
            let e = relative_error(analytic, numeric);
            report.checked += 1;
            if e > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = e;
                report.worst = format!("{name}[{i}] analytic {analytic:e} numeric {numeric:e}");
            }
        }
        _ => report.skipped += 1,
    };

    let mut specs = Vec::new();
    for l in layers {
        l.collect_param_specs(&mut specs);
    }
    let mut work = params.clone();
    for spec in specs.iter().filter(|s| s.role == ParamRole::Trainable) {
        let g = grads.get(&spec.name)?.data().to_vec();
        for i in (0..g.len()).step_by(stride) {
            let orig = work.get(&spec.name)?.data()[i];
            let mut f = [None; 4];
            for (slot, k) in f.iter_mut().zip(STEPS) {
                work.get_mut(&spec.name)?.data_mut()[i] = orig + k * eps;
                *slot = eval(&work, input)?;
            }
            work.get_mut(&spec.name)?.data_mut()[i] = orig;
            record(&spec.name, i, g[i], f);
        }
    }
    if let Some(dx) = dx {
        let mut x = input.clone();
        for i in (0..x.len()).step_by(stride) {
            let orig = x.data()[i];
            let mut f = [None; 4];
            for (slot, k) in f.iter_mut().zip(STEPS) {
                x.data_mut()[i] = orig + k * eps;
                *slot = eval(params, &x)?;
            }
            x.data_mut()[i] = orig;
            record("input", i, dx.data()[i], f);
        }
    }
    Ok(report)
}
