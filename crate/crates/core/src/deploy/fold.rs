use crate::error::{Error, Result};
use crate::nn::{InvertedResidual, Layer, ModelGraph, ParameterSet, Tensor};

/// Merges every batch-norm into the conv, depthwise or dense layer right
/// before it: `w' = w * g / sqrt(var + eps)`,
/// `b' = (b - mean) * g / sqrt(var + eps) + beta`. The merged layer gains
/// a bias. Arithmetic runs in `f64`.
pub fn fold_batchnorm(graph: &ModelGraph, params: &ParameterSet<f32>) -> Result<(ModelGraph, ParameterSet<f32>)> {
    graph.validate()?;
    let mut work = ParameterSet::new();
    let layers = fold_layers(&graph.layers, params, &mut work)?;
    let folded = ModelGraph {
        layers,
        ..graph.clone()
    };
    let mut ordered = ParameterSet::new();
    for s in folded.param_specs() {
        ordered.insert(s.name.clone(), work.get(&s.name)?.clone())?;
    }
    Ok((folded, ordered))
}

fn fold_layers(layers: &[Layer], params: &ParameterSet<f32>, out: &mut ParameterSet<f32>) -> Result<Vec<Layer>> {
    let mut result: Vec<Layer> = Vec::with_capacity(layers.len());
    for layer in layers {
        match layer {
            Layer::BatchNorm { name, channels, eps } => {
                let prev = result.last_mut().ok_or_else(|| Error::Unfoldable(name.clone()))?;
                let (target, out_ch, has_bias) = match prev {
                    Layer::Conv2d {
                        name, out_channels, bias, ..
                    } => (name.clone(), *out_channels, *bias),
                    Layer::DepthwiseConv2d { name, channels, bias, .. } => (name.clone(), *channels, *bias),
                    Layer::Dense { name, out_features, .. } => (name.clone(), *out_features, true),
                    _ => return Err(Error::Unfoldable(name.clone())),
                };
                if out_ch != *channels {
                    return Err(Error::Unfoldable(name.clone()));
                }
                let gamma = params.get(&format!("{name}.gamma"))?.data();
                let beta = params.get(&format!("{name}.beta"))?.data();
                let mean = params.get(&format!("{name}.running_mean"))?.data();
                let var = params.get(&format!("{name}.running_var"))?.data();
                let scale: Vec<f64> = (0..out_ch)
                    .map(|c| gamma[c] as f64 / (var[c] as f64 + eps).sqrt())
                    .collect();
                let w = out.get_mut(&format!("{target}.weight"))?;
                let per = w.len() / out_ch;
                for (c, row) in w.data_mut().chunks_exact_mut(per).enumerate() {
                    for v in row {
                        *v = (*v as f64 * scale[c]) as f32;
                    }
                }
                let bias_name = format!("{target}.bias");
                let old_bias: Vec<f64> = if has_bias {
                    out.get(&bias_name)?.data().iter().map(|&b| b as f64).collect()
                } else {
                    vec![0.0; out_ch]
                };
                let new_bias: Vec<f32> = (0..out_ch)
                    .map(|c| ((old_bias[c] - mean[c] as f64) * scale[c] + beta[c] as f64) as f32)
                    .collect();
                if has_bias {
                    out.get_mut(&bias_name)?.data_mut().copy_from_slice(&new_bias);
                } else {
                    out.insert(bias_name, Tensor::new(vec![out_ch], new_bias)?)?;
                    if let Some(Layer::Conv2d { bias, .. } | Layer::DepthwiseConv2d { bias, .. }) = result.last_mut() {
                        *bias = true;
                    }
                }
            }
            Layer::InvertedResidual(b) => {
                let body = fold_layers(&b.body, params, out)?;
                result.push(Layer::InvertedResidual(InvertedResidual { body, ..b.clone() }));
            }
            Layer::Conv2d { name, bias, .. } | Layer::DepthwiseConv2d { name, bias, .. } => {
                out.insert(format!("{name}.weight"), params.get(&format!("{name}.weight"))?.clone())?;
                if *bias {
                    out.insert(format!("{name}.bias"), params.get(&format!("{name}.bias"))?.clone())?;
                }
                result.push(layer.clone());
            }
            Layer::Dense { name, .. } => {
                out.insert(format!("{name}.weight"), params.get(&format!("{name}.weight"))?.clone())?;
                out.insert(format!("{name}.bias"), params.get(&format!("{name}.bias"))?.clone())?;
                result.push(layer.clone());
            }
            Layer::Relu6 | Layer::GlobalAvgPool | Layer::Sigmoid => result.push(layer.clone()),
        }
    }
    Ok(result)
}
