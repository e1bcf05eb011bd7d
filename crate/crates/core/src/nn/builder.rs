use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::graph::{InputSpec, InvertedResidual, Layer, ModelGraph};
use super::params::ParameterSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed;

pub const BN_EPS: f64 = 1e-5;

/// One stage of inverted-residual blocks at width multiplier 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stage {
    pub expansion: usize,
    pub channels: usize,
    pub repeats: usize,
    pub stride: usize,
}

const fn stage(expansion: usize, channels: usize, repeats: usize, stride: usize) -> Stage {
    Stage {
        expansion,
        channels,
        repeats,
        stride,
    }
}

/// Channel plan of a MobileNetV2-style backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub stem_channels: usize,
    pub stages: Vec<Stage>,
    pub head_channels: usize,
    /// Scaled channel counts are rounded to a multiple of this.
    pub divisor: usize,
    /// Whether the head width shrinks below its base value for width < 1.
    pub scale_head_down: bool,
}

impl Architecture {
    /// Six blocks, sized for single-core CPU training.
    pub fn micro() -> Self {
        Self {
            stem_channels: 32,
            stages: vec![
                stage(1, 16, 1, 2),
                stage(6, 24, 1, 2),
                stage(6, 32, 2, 2),
                stage(6, 64, 1, 2),
                stage(6, 96, 1, 1),
            ],
            head_channels: 1280,
            divisor: 4,
            scale_head_down: true,
        }
    }

    /// The standard MobileNetV2 table.
    pub fn full() -> Self {
        Self {
            stem_channels: 32,
            stages: vec![
                stage(1, 16, 1, 1),
                stage(6, 24, 2, 2),
                stage(6, 32, 3, 2),
                stage(6, 64, 4, 2),
                stage(6, 96, 3, 1),
                stage(6, 160, 3, 2),
                stage(6, 320, 1, 1),
            ],
            head_channels: 1280,
            divisor: 8,
            scale_head_down: false,
        }
    }
}

/// Rounds `v` to the nearest multiple of `divisor`, never dropping more
/// than 10% below `v`.
pub fn make_divisible(v: f64, divisor: usize) -> usize {
    let d = divisor as f64;
    let mut out = (((v + d / 2.0) / d).floor() * d).max(d);
    if out < 0.9 * v {
        out += d;
    }
    out as usize
}

fn conv(name: String, cin: usize, cout: usize, k: usize, s: usize) -> Layer {
    Layer::Conv2d {
        name,
        in_channels: cin,
        out_channels: cout,
        kernel: k,
        stride: s,
        padding: k / 2,
        bias: false,
    }
}

fn bn(name: String, channels: usize) -> Layer {
    Layer::BatchNorm {
        name,
        channels,
        eps: BN_EPS,
    }
}

fn block(name: String, cin: usize, t: usize, cout: usize, stride: usize) -> Layer {
    let hidden = cin * t;
    let mut body = Vec::new();
    if t != 1 {
        body.push(conv(format!("{name}.expand"), cin, hidden, 1, 1));
        body.push(bn(format!("{name}.expand_bn"), hidden));
        body.push(Layer::Relu6);
    }
    body.push(Layer::DepthwiseConv2d {
        name: format!("{name}.dw"),
        channels: hidden,
        kernel: 3,
        stride,
        padding: 1,
        bias: false,
    });
    body.push(bn(format!("{name}.dw_bn"), hidden));
    body.push(Layer::Relu6);
    body.push(conv(format!("{name}.project"), hidden, cout, 1, 1));
    body.push(bn(format!("{name}.project_bn"), cout));
    Layer::InvertedResidual(InvertedResidual {
        name,
        in_channels: cin,
        expansion: t,
        out_channels: cout,
        stride,
        body,
    })
}

/// Layer graph for `arch` scaled by `width_mult`, ending in GAP, a dense
/// layer with `num_classes` outputs and a sigmoid.
pub fn build_graph(arch: &Architecture, width_mult: f64, num_classes: usize, input: InputSpec) -> Result<ModelGraph> {
    if !(width_mult > 0.0 && width_mult <= 2.0) {
        return Err(Error::InvalidArgument(format!("width_mult must be in (0, 2], got {width_mult}")));
    }
    if num_classes == 0 {
        return Err(Error::InvalidArgument("num_classes must be positive".into()));
    }
    let total_stride = 2 * arch.stages.iter().map(|s| s.stride).product::<usize>();
    if input.height < total_stride || input.width < total_stride {
        return Err(Error::shape(
            "stem.conv",
            format!(
                "input {}x{} is smaller than the network stride {total_stride}",
                input.height, input.width
            ),
        ));
    }
    let d = arch.divisor;
    let stem = make_divisible(arch.stem_channels as f64 * width_mult, d);
    let mut layers = vec![
        conv("stem.conv".into(), input.channels, stem, 3, 2),
        bn("stem.bn".into(), stem),
        Layer::Relu6,
    ];
    let mut cin = stem;
    let mut idx = 0;
    for st in &arch.stages {
        let cout = make_divisible(st.channels as f64 * width_mult, d);
        for r in 0..st.repeats {
            let s = if r == 0 { st.stride } else { 1 };
            layers.push(block(format!("block{idx}"), cin, st.expansion, cout, s));
            cin = cout;
            idx += 1;
        }
    }
    let head_mult = if arch.scale_head_down { width_mult } else { width_mult.max(1.0) };
    let head = make_divisible(arch.head_channels as f64 * head_mult, d);
    layers.extend([
        conv("head.conv".into(), cin, head, 1, 1),
        bn("head.bn".into(), head),
        Layer::Relu6,
        Layer::GlobalAvgPool,
        Layer::Dense {
            name: "classifier".into(),
            in_features: head,
            out_features: num_classes,
        },
        Layer::Sigmoid,
    ]);
    let graph = ModelGraph {
        input,
        num_classes,
        width_mult,
        layers,
    };
    graph.validate()?;
    graph.shapes()?;
    Ok(graph)
}

/// Glorot-uniform bound for a dense layer.
pub fn dense_init_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Fresh parameters: He-normal convolutions, Glorot-uniform dense weights,
/// identity batch-norm and zero biases, except the output layer whose bias
/// starts at the class-prior logit `ln(1/(C-1))` so the sigmoids begin at
/// `1/C` instead of 0.5. Every tensor draws from its own stream derived
/// from `seed` and its position in the graph.
pub fn init_params(graph: &ModelGraph, seed_value: u64) -> Result<ParameterSet<f32>> {
    let mut params = ParameterSet::new();
    let head_bias = graph
        .layers
        .iter()
        .rev()
        .find_map(|l| match l {
            Layer::Dense { name, .. } => Some(format!("{name}.bias")),
            _ => None,
        });
    let prior_logit = if graph.num_classes > 1 {
        -((graph.num_classes - 1) as f32).ln()
    } else {
        0.0
    };
    for (i, spec) in graph.param_specs().into_iter().enumerate() {
        let n: usize = spec.shape.iter().product();
        let mut rng = seed::derived_rng(seed_value, &[i as u64]);
        let suffix = spec.name.rsplit('.').next().unwrap_or_default();
        let data: Vec<f32> = match (suffix, spec.shape.len()) {
            ("weight", 4) => {
                let fan_in = spec.shape[1] * spec.shape[2] * spec.shape[3];
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                (0..n).map(|_| normal.sample(&mut rng) as f32).collect()
            }
            ("weight", 2) => {
                let limit = dense_init_limit(spec.shape[1], spec.shape[0]);
                let u = Uniform::new_inclusive(-limit, limit);
                (0..n).map(|_| rng.sample(u) as f32).collect()
            }
            ("gamma", _) | ("running_var", _) => vec![1.0; n],
            ("bias", _) if head_bias.as_deref() == Some(spec.name.as_str()) => vec![prior_logit; n],
            _ => vec![0.0; n],
        };
        params.insert(spec.name, Tensor::new(spec.shape, data)?)?;
    }
    Ok(params)
}

/// The default classifier: micro MobileNetV2 backbone with the
/// GAP → Dense → Sigmoid head.
pub fn build_micro_mobilenet(
    width_mult: f64,
    num_classes: usize,
    input: InputSpec,
    seed_value: u64,
) -> Result<(ModelGraph, ParameterSet<f32>)> {
    let graph = build_graph(&Architecture::micro(), width_mult, num_classes, input)?;
    let params = init_params(&graph, seed_value)?;
    Ok((graph, params))
}
