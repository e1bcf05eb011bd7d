use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for InputSpec {
    fn default() -> Self {
        Self {
            channels: 3,
            height: 224,
            width: 384,
        }
    }
}

/// Shape of one sample's activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActShape {
    Map { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl ActShape {
    pub fn elems(&self) -> usize {
        match *self {
            ActShape::Map { c, h, w } => c * h * w,
            ActShape::Flat(f) => f,
        }
    }

    pub fn dims(&self, batch: usize) -> Vec<usize> {
        match *self {
            ActShape::Map { c, h, w } => vec![batch, c, h, w],
            ActShape::Flat(f) => vec![batch, f],
        }
    }

    fn channels(&self) -> usize {
        match *self {
            ActShape::Map { c, .. } => c,
            ActShape::Flat(f) => f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv2d {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    },
    DepthwiseConv2d {
        name: String,
        channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    },
    BatchNorm {
        name: String,
        channels: usize,
        eps: f64,
    },
    Relu6,
    InvertedResidual(InvertedResidual),
    GlobalAvgPool,
    Dense {
        name: String,
        in_features: usize,
        out_features: usize,
    },
    Sigmoid,
}

/// Expand -> depthwise -> project, with an identity skip when the stride is
/// one and channel counts match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedResidual {
    pub name: String,
    pub in_channels: usize,
    pub expansion: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub body: Vec<Layer>,
}

impl InvertedResidual {
    pub fn residual(&self) -> bool {
        self.stride == 1 && self.in_channels == self.out_channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Trainable,
    /// Running statistics: updated outside of the optimizer.
    Buffer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: ParamRole,
}

/// Cost estimate of one layer for a given batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub label: String,
    pub kind: String,
    pub flops: u64,
    pub output_elems: u64,
}

impl Layer {
    pub fn label(&self) -> String {
        match self {
            Layer::Conv2d { name, .. }
            | Layer::DepthwiseConv2d { name, .. }
            | Layer::BatchNorm { name, .. }
            | Layer::Dense { name, .. } => name.clone(),
            Layer::InvertedResidual(b) => b.name.clone(),
            Layer::Relu6 => "relu6".into(),
            Layer::GlobalAvgPool => "global_avg_pool".into(),
            Layer::Sigmoid => "sigmoid".into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv2d",
            Layer::DepthwiseConv2d { .. } => "depthwise_conv2d",
            Layer::BatchNorm { .. } => "batch_norm",
            Layer::Relu6 => "relu6",
            Layer::InvertedResidual(_) => "inverted_residual",
            Layer::GlobalAvgPool => "global_avg_pool",
            Layer::Dense { .. } => "dense",
            Layer::Sigmoid => "sigmoid",
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Layer::Conv2d { .. } | Layer::DepthwiseConv2d { .. } | Layer::Dense { .. })
    }

    /// Output shape for one sample, or a shape error naming this layer.
    pub fn output_shape(&self, input: ActShape) -> Result<ActShape> {
        let label = self.label();
        let err = |msg: String| Err(Error::shape(label.clone(), msg));
        let conv_dim = |len: usize, k: usize, s: usize, p: usize| -> Option<usize> {
            (s > 0 && k > 0 && len + 2 * p >= k).then(|| (len + 2 * p - k) / s + 1)
        };
        match (self, input) {
            (
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                },
                ActShape::Map { c, h, w },
            ) => {
                if c != *in_channels {
                    return err(format!("expected {in_channels} input channels, got {c}"));
                }
                match (conv_dim(h, *kernel, *stride, *padding), conv_dim(w, *kernel, *stride, *padding)) {
                    (Some(h), Some(w)) => Ok(ActShape::Map { c: *out_channels, h, w }),
                    _ => err(format!("kernel {kernel} does not fit a {h}x{w} map")),
                }
            }
            (
                Layer::DepthwiseConv2d {
                    channels,
                    kernel,
                    stride,
                    padding,
                    ..
                },
                ActShape::Map { c, h, w },
            ) => {
                if c != *channels {
                    return err(format!("expected {channels} channels, got {c}"));
                }
                match (conv_dim(h, *kernel, *stride, *padding), conv_dim(w, *kernel, *stride, *padding)) {
                    (Some(h), Some(w)) => Ok(ActShape::Map { c, h, w }),
                    _ => err(format!("kernel {kernel} does not fit a {h}x{w} map")),
                }
            }
            (Layer::BatchNorm { channels, .. }, s) => {
                if s.channels() != *channels {
                    return err(format!("expected {channels} channels, got {}", s.channels()));
                }
                Ok(s)
            }
            (Layer::Relu6, s) | (Layer::Sigmoid, s) => Ok(s),
            (Layer::InvertedResidual(b), s) => {
                if s.channels() != b.in_channels {
                    return err(format!("expected {} input channels, got {}", b.in_channels, s.channels()));
                }
                let mut cur = s;
                for l in &b.body {
                    cur = l.output_shape(cur)?;
                }
                if cur.channels() != b.out_channels {
                    return err(format!("body produces {} channels, declared {}", cur.channels(), b.out_channels));
                }
                if b.residual() && cur != s {
                    return err("residual block changes shape".into());
                }
                Ok(cur)
            }
            (Layer::GlobalAvgPool, ActShape::Map { c, .. }) => Ok(ActShape::Flat(c)),
            (
                Layer::Dense {
                    in_features,
                    out_features,
                    ..
                },
                ActShape::Flat(f),
            ) => {
                if f != *in_features {
                    return err(format!("expected {in_features} features, got {f}"));
                }
                Ok(ActShape::Flat(*out_features))
            }
            (l, s) => err(format!("{} cannot consume activation {s:?}", l.kind())),
        }
    }

    /// Parameter tensors this layer owns, in storage order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        self.collect_param_specs(&mut out);
        out
    }

    pub(crate) fn collect_param_specs(&self, out: &mut Vec<ParamSpec>) {
        let mut push = |name: String, shape: Vec<usize>, role| out.push(ParamSpec { name, shape, role });
        match self {
            Layer::Conv2d {
                name,
                in_channels,
                out_channels,
                kernel,
                bias,
                ..
            } => {
                push(format!("{name}.weight"), vec![*out_channels, *in_channels, *kernel, *kernel], ParamRole::Trainable);
                if *bias {
                    push(format!("{name}.bias"), vec![*out_channels], ParamRole::Trainable);
                }
            }
            Layer::DepthwiseConv2d {
                name,
                channels,
                kernel,
                bias,
                ..
            } => {
                push(format!("{name}.weight"), vec![*channels, 1, *kernel, *kernel], ParamRole::Trainable);
                if *bias {
                    push(format!("{name}.bias"), vec![*channels], ParamRole::Trainable);
                }
            }
            Layer::BatchNorm { name, channels, .. } => {
                push(format!("{name}.gamma"), vec![*channels], ParamRole::Trainable);
                push(format!("{name}.beta"), vec![*channels], ParamRole::Trainable);
                push(format!("{name}.running_mean"), vec![*channels], ParamRole::Buffer);
                push(format!("{name}.running_var"), vec![*channels], ParamRole::Buffer);
            }
            Layer::Dense {
                name,
                in_features,
                out_features,
            } => {
                push(format!("{name}.weight"), vec![*out_features, *in_features], ParamRole::Trainable);
                push(format!("{name}.bias"), vec![*out_features], ParamRole::Trainable);
            }
            Layer::InvertedResidual(b) => {
                for l in &b.body {
                    l.collect_param_specs(out);
                }
            }
            Layer::Relu6 | Layer::GlobalAvgPool | Layer::Sigmoid => {}
        }
    }

    fn costs(&self, input: ActShape, batch: u64, out: &mut Vec<LayerCost>) -> ActShape {
        let output = self.output_shape(input).expect("validated graph");
        let n_out = output.elems() as u64 * batch;
        let flops = match self {
            Layer::Conv2d { in_channels, kernel, .. } => 2 * n_out * (*in_channels * kernel * kernel) as u64,
            Layer::DepthwiseConv2d { kernel, .. } => 2 * n_out * (kernel * kernel) as u64,
            Layer::BatchNorm { .. } => 2 * n_out,
            Layer::Relu6 | Layer::Sigmoid => n_out,
            Layer::GlobalAvgPool => input.elems() as u64 * batch,
            Layer::Dense { in_features, .. } => 2 * n_out * *in_features as u64,
            Layer::InvertedResidual(b) => {
                let mut cur = input;
                for l in &b.body {
                    cur = l.costs(cur, batch, out);
                }
                if b.residual() {
                    out.push(LayerCost {
                        label: format!("{}.add", b.name),
                        kind: "add".into(),
                        flops: n_out,
                        output_elems: n_out,
                    });
                }
                return output;
            }
        };
        out.push(LayerCost {
            label: self.label(),
            kind: self.kind().into(),
            flops,
            output_elems: n_out,
        });
        output
    }
}

/// Layer topology without numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub input: InputSpec,
    pub num_classes: usize,
    pub width_mult: f64,
    pub layers: Vec<Layer>,
}

impl ModelGraph {
    pub fn input_shape(&self) -> ActShape {
        ActShape::Map {
            c: self.input.channels,
            h: self.input.height,
            w: self.input.width,
        }
    }

    /// Per-layer output shapes; errors name the first incompatible layer.
    pub fn shapes(&self) -> Result<Vec<ActShape>> {
        let mut cur = self.input_shape();
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            cur = l.output_shape(cur)?;
            out.push(cur);
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<ActShape> {
        Ok(self.shapes()?.last().copied().unwrap_or(self.input_shape()))
    }

    /// Shape compatibility plus the classifier head contract
    /// GAP -> Dense(num_classes) -> Sigmoid.
    pub fn validate(&self) -> Result<()> {
        if !(self.width_mult > 0.0) {
            return Err(Error::InvalidArgument(format!("width multiplier must be positive, got {}", self.width_mult)));
        }
        self.shapes()?;
        let n = self.layers.len();
        let head_ok = n >= 3
            && matches!(self.layers[n - 3], Layer::GlobalAvgPool)
            && matches!(&self.layers[n - 2], Layer::Dense { out_features, .. } if *out_features == self.num_classes)
            && matches!(self.layers[n - 1], Layer::Sigmoid);
        if !head_ok {
            return Err(Error::shape(
                "head",
                format!("graph must end with global_avg_pool -> dense({}) -> sigmoid", self.num_classes),
            ));
        }
        let specs = self.param_specs();
        for (i, s) in specs.iter().enumerate() {
            if specs[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::TensorMismatch {
                    name: s.name.clone(),
                    msg: "duplicate parameter name in graph".into(),
                });
            }
        }
        Ok(())
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        for l in &self.layers {
            l.collect_param_specs(&mut out);
        }
        out
    }

    pub fn trainable_count(&self) -> usize {
        self.param_specs()
            .iter()
            .filter(|s| s.role == ParamRole::Trainable)
            .map(|s| s.shape.iter().product::<usize>())
            .sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.param_specs().iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }

    /// Flattened per-layer FLOP and activation estimates for a batch.
    pub fn layer_costs(&self, batch: usize) -> Result<Vec<LayerCost>> {
        self.shapes()?;
        let mut out = Vec::new();
        let mut cur = self.input_shape();
        for l in &self.layers {
            cur = l.costs(cur, batch as u64, &mut out);
        }
        Ok(out)
    }

    pub fn contains_batch_norm(&self) -> bool {
        fn any_bn(layers: &[Layer]) -> bool {
            layers.iter().any(|l| match l {
                Layer::BatchNorm { .. } => true,
                Layer::InvertedResidual(b) => any_bn(&b.body),
                _ => false,
            })
        }
        any_bn(&self.layers)
    }
}
