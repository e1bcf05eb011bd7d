use rayon::prelude::*;

use super::graph::{ActShape, Layer, ModelGraph, ParamRole};
use super::ops::{self, ConvGeom};
use super::params::ParameterSet;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch-norm uses batch statistics.
    Train,
    /// Batch-norm uses running statistics.
    Infer,
}

#[derive(Debug, Clone)]
enum Cache<T> {
    Conv { input: Tensor<T> },
    Depthwise { input: Tensor<T> },
    BatchNorm {
        name: String,
        xhat: Tensor<T>,
        inv_std: Vec<T>,
        mean: Vec<T>,
        var: Vec<T>,
    },
    Relu6 { input: Tensor<T> },
    Block { body: Vec<Cache<T>> },
    Gap { c: usize, h: usize, w: usize },
    Dense { input: Tensor<T> },
    Sigmoid { output: Tensor<T> },
}

/// Activations recorded by a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    caches: Vec<Cache<T>>,
    output: Tensor<T>,
}

impl<T: Scalar> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }

    /// `(batch-norm name, batch mean, biased batch variance)` per BN layer.
    pub fn batch_stats(&self) -> Vec<(String, Vec<T>, Vec<T>)> {
        fn walk<T: Scalar>(caches: &[Cache<T>], out: &mut Vec<(String, Vec<T>, Vec<T>)>) {
            for c in caches {
                match c {
                    Cache::BatchNorm { name, mean, var, .. } => out.push((name.clone(), mean.clone(), var.clone())),
                    Cache::Block { body } => walk(body, out),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.caches, &mut out);
        out
    }

    /// Region of every ReLU6 input: 0 below zero, 1 linear, 2 saturated.
    /// Two traces with equal patterns lie on the same smooth piece.
    pub fn relu_pattern(&self) -> Vec<u8> {
        fn walk<T: Scalar>(caches: &[Cache<T>], out: &mut Vec<u8>) {
            for c in caches {
                match c {
                    Cache::Relu6 { input } => out.extend(input.data().iter().map(|&v| {
                        if v <= T::zero() {
                            0
                        } else if v >= T::lit(6.0) {
                            2
                        } else {
                            1
                        }
                    })),
                    Cache::Block { body } => walk(body, out),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.caches, &mut out);
        out
    }
}

fn conv_geom(input: ActShape, cin: usize, cout: usize, k: usize, s: usize, p: usize) -> ConvGeom {
    let ActShape::Map { h, w, .. } = input else { unreachable!("validated map input") };
    ConvGeom {
        cin,
        cout,
        k,
        s,
        p,
        h,
        w,
        oh: (h + 2 * p - k) / s + 1,
        ow: (w + 2 * p - k) / s + 1,
    }
}

fn act_shape<T: Scalar>(t: &Tensor<T>) -> ActShape {
    match t.shape() {
        [_, c, h, w] => ActShape::Map { c: *c, h: *h, w: *w },
        [_, f] => ActShape::Flat(*f),
        _ => unreachable!("tensors are rank 2 or 4"),
    }
}

fn check_input<T: Scalar>(graph: &ModelGraph, batch: &Tensor<T>) -> Result<()> {
    let want = graph.input_shape();
    let first = graph.layers.first().map(Layer::label).unwrap_or_else(|| "input".into());
    let got = match batch.shape() {
        [_, c, h, w] => ActShape::Map { c: *c, h: *h, w: *w },
        s => return Err(Error::shape(first, format!("expected a rank-4 batch, got shape {s:?}"))),
    };
    if batch.batch() == 0 {
        return Err(Error::shape(first, "empty batch"));
    }
    if got != want {
        return Err(Error::shape(first, format!("expected input {want:?}, got {got:?}")));
    }
    Ok(())
}

/// Class probabilities `N x num_classes`.
pub fn forward<T: Scalar>(graph: &ModelGraph, params: &ParameterSet<T>, batch: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
    check_input(graph, batch)?;
    let out = run(&graph.layers, params, batch.clone(), mode, None, false)?;
    out.ensure_finite("model output")?;
    Ok(out)
}

/// Like [`forward`] but verifies every intermediate activation is finite
/// and names the first layer that is not.
pub fn forward_checked<T: Scalar>(graph: &ModelGraph, params: &ParameterSet<T>, batch: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
    check_input(graph, batch)?;
    run(&graph.layers, params, batch.clone(), mode, None, true)
}

/// Train-mode forward pass that records what [`backward_from`] needs.
pub fn forward_train<T: Scalar>(graph: &ModelGraph, params: &ParameterSet<T>, batch: &Tensor<T>) -> Result<Trace<T>> {
    check_input(graph, batch)?;
    let mut caches = Vec::with_capacity(graph.layers.len());
    let output = run(&graph.layers, params, batch.clone(), Mode::Train, Some(&mut caches), false)?;
    output.ensure_finite("model output")?;
    Ok(Trace { caches, output })
}

/// Runs a layer list directly on a tensor, without the head and input
/// checks of [`forward`]. Useful for testing individual layers.
pub fn forward_layers<T: Scalar>(layers: &[Layer], params: &ParameterSet<T>, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
    run(layers, params, x, mode, None, false)
}

/// Train-mode counterpart of [`forward_layers`].
pub fn forward_layers_train<T: Scalar>(layers: &[Layer], params: &ParameterSet<T>, x: Tensor<T>) -> Result<Trace<T>> {
    let mut caches = Vec::new();
    let output = run(layers, params, x, Mode::Train, Some(&mut caches), false)?;
    Ok(Trace { caches, output })
}

fn run<T: Scalar>(
    layers: &[Layer],
    params: &ParameterSet<T>,
    mut x: Tensor<T>,
    mode: Mode,
    mut caches: Option<&mut Vec<Cache<T>>>,
    checked: bool,
) -> Result<Tensor<T>> {
    for layer in layers {
        let (y, cache) = layer_forward(layer, params, x, mode, caches.is_some(), checked)?;
        if checked {
            y.ensure_finite(&layer.label())?;
        }
        if let (Some(c), Some(cache)) = (caches.as_deref_mut(), cache) {
            c.push(cache);
        }
        x = y;
    }
    Ok(x)
}

fn layer_forward<T: Scalar>(
    layer: &Layer,
    params: &ParameterSet<T>,
    x: Tensor<T>,
    mode: Mode,
    record: bool,
    checked: bool,
) -> Result<(Tensor<T>, Option<Cache<T>>)> {
    let in_shape = act_shape(&x);
    let out_shape = layer.output_shape(in_shape)?;
    let n = x.batch();
    match layer {
        Layer::Conv2d {
            name,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            bias,
        } => {
            let g = conv_geom(in_shape, *in_channels, *out_channels, *kernel, *stride, *padding);
            let w = params.get(&format!("{name}.weight"))?.data();
            let b = if *bias { Some(params.get(&format!("{name}.bias"))?.data()) } else { None };
            let mut y = Tensor::zeros(&out_shape.dims(n));
            let (ips, ops_) = (in_shape.elems(), out_shape.elems());
            y.data_mut()
                .par_chunks_mut(ops_)
                .zip(x.data().par_chunks(ips))
                .for_each_init(Vec::new, |col, (yo, xi)| ops::conv_forward(&g, w, b, xi, yo, col));
            Ok((y, record.then_some(Cache::Conv { input: x })))
        }
        Layer::DepthwiseConv2d {
            name,
            channels,
            kernel,
            stride,
            padding,
            bias,
        } => {
            let g = conv_geom(in_shape, *channels, *channels, *kernel, *stride, *padding);
            let w = params.get(&format!("{name}.weight"))?.data();
            let b = if *bias { Some(params.get(&format!("{name}.bias"))?.data()) } else { None };
            let mut y = Tensor::zeros(&out_shape.dims(n));
            let (ips, ops_) = (in_shape.elems(), out_shape.elems());
            y.data_mut()
                .par_chunks_mut(ops_)
                .zip(x.data().par_chunks(ips))
                .for_each(|(yo, xi)| ops::depthwise_forward(&g, w, b, xi, yo));
            Ok((y, record.then_some(Cache::Depthwise { input: x })))
        }
        Layer::BatchNorm { name, channels, eps } => {
            let c = *channels;
            let spatial = in_shape.elems() / c;
            let gamma = params.get(&format!("{name}.gamma"))?.data();
            let beta = params.get(&format!("{name}.beta"))?.data();
            let eps = T::lit(*eps);
            let (mean, var) = match mode {
                Mode::Train => batch_moments(x.data(), n, c, spatial),
                Mode::Infer => (
                    params.get(&format!("{name}.running_mean"))?.data().to_vec(),
                    params.get(&format!("{name}.running_var"))?.data().to_vec(),
                ),
            };
            if checked && var.iter().any(|v| *v < T::zero()) {
                return Err(Error::NonFinite(format!("{name}: negative variance")));
            }
            let inv_std: Vec<T> = var.iter().map(|v| T::one() / (*v + eps).sqrt()).collect();
            let mut y = x;
            let mut xhat = record.then(|| Tensor::zeros(y.shape()));
            for (s, chunk) in y.data_mut().chunks_exact_mut(c * spatial).enumerate() {
                for ch in 0..c {
                    let plane = &mut chunk[ch * spatial..(ch + 1) * spatial];
                    let (m, is, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
                    if let Some(xh) = xhat.as_mut() {
                        let off = s * c * spatial + ch * spatial;
                        let xh = &mut xh.data_mut()[off..off + spatial];
                        for (v, h) in plane.iter_mut().zip(xh.iter_mut()) {
                            *h = (*v - m) * is;
                            *v = g * *h + b;
                        }
                    } else {
                        for v in plane.iter_mut() {
                            *v = g * ((*v - m) * is) + b;
                        }
                    }
                }
            }
            let cache = xhat.map(|xhat| Cache::BatchNorm {
                name: name.clone(),
                xhat,
                inv_std,
                mean,
                var,
            });
            Ok((y, cache))
        }
        Layer::Relu6 => {
            let input = record.then(|| x.clone());
            let mut y = x;
            y.data_mut().iter_mut().for_each(|v| *v = ops::relu6(*v));
            Ok((y, input.map(|input| Cache::Relu6 { input })))
        }
        Layer::Sigmoid => {
            let mut y = x;
            y.data_mut().iter_mut().for_each(|v| *v = ops::sigmoid(*v));
            let cache = record.then(|| Cache::Sigmoid { output: y.clone() });
            Ok((y, cache))
        }
        Layer::GlobalAvgPool => {
            let ActShape::Map { c, h, w } = in_shape else { unreachable!() };
            let hw = h * w;
            let inv = T::one() / T::from_usize(hw).unwrap();
            let data: Vec<T> = x.data().chunks_exact(hw).map(|p| p.iter().copied().sum::<T>() * inv).collect();
            Ok((Tensor::new(vec![n, c], data)?, record.then_some(Cache::Gap { c, h, w })))
        }
        Layer::Dense {
            name,
            in_features,
            out_features,
        } => {
            let w = params.get(&format!("{name}.weight"))?.data();
            let b = params.get(&format!("{name}.bias"))?.data();
            let (fi, fo) = (*in_features, *out_features);
            let mut y = Vec::with_capacity(n * fo);
            for xi in x.data().chunks_exact(fi) {
                for o in 0..fo {
                    y.push(b[o] + ops::dot(&w[o * fi..(o + 1) * fi], xi));
                }
            }
            Ok((Tensor::new(vec![n, fo], y)?, record.then_some(Cache::Dense { input: x })))
        }
        Layer::InvertedResidual(block) => {
            let mut body = Vec::new();
            let skip = block.residual().then(|| x.clone());
            let mut y = run(&block.body, params, x, mode, record.then_some(&mut body), checked)?;
            if let Some(skip) = skip {
                for (a, b) in y.data_mut().iter_mut().zip(skip.data()) {
                    *a += *b;
                }
            }
            Ok((y, record.then_some(Cache::Block { body })))
        }
    }
}

fn batch_moments<T: Scalar>(x: &[T], n: usize, c: usize, spatial: usize) -> (Vec<T>, Vec<T>) {
    let count = T::from_usize(n * spatial).unwrap();
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut s = T::zero();
        for i in 0..n {
            let off = (i * c + ch) * spatial;
            s += x[off..off + spatial].iter().copied().sum::<T>();
        }
        let m = s / count;
        let mut q = T::zero();
        for i in 0..n {
            let off = (i * c + ch) * spatial;
            q += x[off..off + spatial].iter().map(|v| (*v - m) * (*v - m)).sum::<T>();
        }
        mean[ch] = m;
        var[ch] = q / count;
    }
    (mean, var)
}

/// Gradients of the scalar whose derivative w.r.t. the model output is
/// `d_output`, for every trainable parameter. Buffers are not included.
pub fn backward_from<T: Scalar>(
    graph: &ModelGraph,
    params: &ParameterSet<T>,
    trace: &Trace<T>,
    d_output: &Tensor<T>,
) -> Result<ParameterSet<T>> {
    backward_layers(&graph.layers, params, trace, d_output, false).map(|(g, _)| g)
}

/// Backward pass over an arbitrary layer list; optionally also returns the
/// gradient w.r.t. the input.
pub fn backward_layers<T: Scalar>(
    layers: &[Layer],
    params: &ParameterSet<T>,
    trace: &Trace<T>,
    d_output: &Tensor<T>,
    need_input_grad: bool,
) -> Result<(ParameterSet<T>, Option<Tensor<T>>)> {
    if d_output.shape() != trace.output.shape() {
        return Err(Error::shape(
            "output",
            format!("gradient shape {:?} vs output {:?}", d_output.shape(), trace.output.shape()),
        ));
    }
    let mut grads = ParameterSet::new();
    let mut specs = Vec::new();
    for l in layers {
        collect_trainable(l, &mut specs);
    }
    for (name, shape) in specs {
        grads.insert(name, Tensor::zeros(&shape))?;
    }
    let dx = back(layers, params, &trace.caches, d_output.clone(), &mut grads, need_input_grad)?;
    Ok((grads, dx))
}

fn collect_trainable(layer: &Layer, out: &mut Vec<(String, Vec<usize>)>) {
    let mut specs = Vec::new();
    layer.collect_param_specs(&mut specs);
    out.extend(
        specs
            .into_iter()
            .filter(|s| s.role == ParamRole::Trainable)
            .map(|s| (s.name, s.shape)),
    );
}

/// Exponential update of batch-norm running statistics from a train trace:
/// `running = momentum * running + (1 - momentum) * batch`.
pub fn update_running_stats<T: Scalar>(params: &mut ParameterSet<T>, trace: &Trace<T>, momentum: f64) -> Result<()> {
    let m = T::lit(momentum);
    let k = T::one() - m;
    for (name, mean, var) in trace.batch_stats() {
        for (suffix, stat) in [("running_mean", mean), ("running_var", var)] {
            let t = params.get_mut(&format!("{name}.{suffix}"))?;
            for (r, b) in t.data_mut().iter_mut().zip(&stat) {
                *r = m * *r + k * *b;
            }
        }
    }
    Ok(())
}

fn back<T: Scalar>(
    layers: &[Layer],
    params: &ParameterSet<T>,
    caches: &[Cache<T>],
    mut dy: Tensor<T>,
    grads: &mut ParameterSet<T>,
    need_dx: bool,
) -> Result<Option<Tensor<T>>> {
    for i in (0..layers.len()).rev() {
        let need = i > 0 || need_dx;
        match layer_backward(&layers[i], params, &caches[i], dy, grads, need)? {
            Some(d) => dy = d,
            None => return Ok(None),
        }
    }
    Ok(Some(dy))
}

fn layer_backward<T: Scalar>(
    layer: &Layer,
    params: &ParameterSet<T>,
    cache: &Cache<T>,
    dy: Tensor<T>,
    grads: &mut ParameterSet<T>,
    need_dx: bool,
) -> Result<Option<Tensor<T>>> {
    match (layer, cache) {
        (
            Layer::Conv2d {
                name,
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                bias,
            },
            Cache::Conv { input },
        ) => {
            let in_shape = act_shape(input);
            let g = conv_geom(in_shape, *in_channels, *out_channels, *kernel, *stride, *padding);
            let w = params.get(&format!("{name}.weight"))?.data();
            let (ips, ops_) = (in_shape.elems(), dy.per_sample());
            let wlen = w.len();
            let blen = if *bias { *out_channels } else { 0 };
            let mut dx = need_dx.then(|| Tensor::zeros(input.shape()));
            let per_sample = |xi: &[T], dyi: &[T], dxi: Option<&mut [T]>, col: &mut Vec<T>| {
                let mut dw = vec![T::zero(); wlen];
                let mut db = vec![T::zero(); blen];
                ops::conv_backward(&g, w, xi, dyi, &mut dw, bias.then_some(&mut db[..]), dxi, col);
                (dw, db)
            };
            let parts: Vec<(Vec<T>, Vec<T>)> = match dx.as_mut() {
                Some(dx) => dx
                    .data_mut()
                    .par_chunks_mut(ips)
                    .zip(input.data().par_chunks(ips))
                    .zip(dy.data().par_chunks(ops_))
                    .map_init(Vec::new, |col, ((dxi, xi), dyi)| per_sample(xi, dyi, Some(dxi), col))
                    .collect(),
                None => input
                    .data()
                    .par_chunks(ips)
                    .zip(dy.data().par_chunks(ops_))
                    .map_init(Vec::new, |col, (xi, dyi)| per_sample(xi, dyi, None, col))
                    .collect(),
            };
            for (dw, db) in &parts {
                grads.accumulate(&format!("{name}.weight"), dw)?;
                if *bias {
                    grads.accumulate(&format!("{name}.bias"), db)?;
                }
            }
            Ok(dx)
        }
        (
            Layer::DepthwiseConv2d {
                name,
                channels,
                kernel,
                stride,
                padding,
                bias,
            },
            Cache::Depthwise { input },
        ) => {
            let in_shape = act_shape(input);
            let g = conv_geom(in_shape, *channels, *channels, *kernel, *stride, *padding);
            let w = params.get(&format!("{name}.weight"))?.data();
            let (ips, ops_) = (in_shape.elems(), dy.per_sample());
            let wlen = w.len();
            let blen = if *bias { *channels } else { 0 };
            let mut dx = need_dx.then(|| Tensor::zeros(input.shape()));
            let per_sample = |xi: &[T], dyi: &[T], dxi: Option<&mut [T]>| {
                let mut dw = vec![T::zero(); wlen];
                let mut db = vec![T::zero(); blen];
                ops::depthwise_backward(&g, w, xi, dyi, &mut dw, bias.then_some(&mut db[..]), dxi);
                (dw, db)
            };
            let parts: Vec<(Vec<T>, Vec<T>)> = match dx.as_mut() {
                Some(dx) => dx
                    .data_mut()
                    .par_chunks_mut(ips)
                    .zip(input.data().par_chunks(ips))
                    .zip(dy.data().par_chunks(ops_))
                    .map(|((dxi, xi), dyi)| per_sample(xi, dyi, Some(dxi)))
                    .collect(),
                None => input
                    .data()
                    .par_chunks(ips)
                    .zip(dy.data().par_chunks(ops_))
                    .map(|(xi, dyi)| per_sample(xi, dyi, None))
                    .collect(),
            };
            for (dw, db) in &parts {
                grads.accumulate(&format!("{name}.weight"), dw)?;
                if *bias {
                    grads.accumulate(&format!("{name}.bias"), db)?;
                }
            }
            Ok(dx)
        }
        (Layer::BatchNorm { name, channels, .. }, Cache::BatchNorm { xhat, inv_std, .. }) => {
            let c = *channels;
            let n = dy.batch();
            let spatial = dy.per_sample() / c;
            let gamma = params.get(&format!("{name}.gamma"))?.data();
            let mut dgamma = vec![T::zero(); c];
            let mut dbeta = vec![T::zero(); c];
            let (d, xh) = (dy.data(), xhat.data());
            for ch in 0..c {
                for i in 0..n {
                    let off = (i * c + ch) * spatial;
                    dbeta[ch] += d[off..off + spatial].iter().copied().sum::<T>();
                    dgamma[ch] += ops::dot(&d[off..off + spatial], &xh[off..off + spatial]);
                }
            }
            grads.accumulate(&format!("{name}.gamma"), &dgamma)?;
            grads.accumulate(&format!("{name}.beta"), &dbeta)?;
            if !need_dx {
                return Ok(None);
            }
            let m = T::from_usize(n * spatial).unwrap();
            let mut dx = dy;
            for ch in 0..c {
                let k = gamma[ch] * inv_std[ch] / m;
                for i in 0..n {
                    let off = (i * c + ch) * spatial;
                    for (v, h) in dx.data_mut()[off..off + spatial].iter_mut().zip(&xh[off..off + spatial]) {
                        *v = k * (m * *v - dbeta[ch] - *h * dgamma[ch]);
                    }
                }
            }
            Ok(Some(dx))
        }
        (Layer::Relu6, Cache::Relu6 { input }) => {
            let mut dx = dy;
            let six = T::lit(6.0);
            for (g, x) in dx.data_mut().iter_mut().zip(input.data()) {
                if *x <= T::zero() || *x >= six {
                    *g = T::zero();
                }
            }
            Ok(Some(dx))
        }
        (Layer::Sigmoid, Cache::Sigmoid { output }) => {
            let mut dx = dy;
            for (g, y) in dx.data_mut().iter_mut().zip(output.data()) {
                *g *= *y * (T::one() - *y);
            }
            Ok(Some(dx))
        }
        (Layer::GlobalAvgPool, Cache::Gap { c, h, w }) => {
            if !need_dx {
                return Ok(None);
            }
            let hw = h * w;
            let inv = T::one() / T::from_usize(hw).unwrap();
            let mut data = Vec::with_capacity(dy.len() * hw);
            for &g in dy.data() {
                data.extend(std::iter::repeat(g * inv).take(hw));
            }
            Ok(Some(Tensor::new(vec![dy.batch(), *c, *h, *w], data)?))
        }
        (
            Layer::Dense {
                name,
                in_features,
                out_features,
            },
            Cache::Dense { input },
        ) => {
            let (fi, fo) = (*in_features, *out_features);
            let w = params.get(&format!("{name}.weight"))?.data();
            let mut dw = vec![T::zero(); fi * fo];
            let mut db = vec![T::zero(); fo];
            for (xi, dyi) in input.data().chunks_exact(fi).zip(dy.data().chunks_exact(fo)) {
                for o in 0..fo {
                    db[o] += dyi[o];
                    for (g, x) in dw[o * fi..(o + 1) * fi].iter_mut().zip(xi) {
                        *g += dyi[o] * *x;
                    }
                }
            }
            grads.accumulate(&format!("{name}.weight"), &dw)?;
            grads.accumulate(&format!("{name}.bias"), &db)?;
            if !need_dx {
                return Ok(None);
            }
            let mut dx = Tensor::zeros(input.shape());
            for (dxi, dyi) in dx.data_mut().chunks_exact_mut(fi).zip(dy.data().chunks_exact(fo)) {
                for o in 0..fo {
                    for (g, wv) in dxi.iter_mut().zip(&w[o * fi..(o + 1) * fi]) {
                        *g += dyi[o] * *wv;
                    }
                }
            }
            Ok(Some(dx))
        }
        (Layer::InvertedResidual(block), Cache::Block { body }) => {
            let skip = (block.residual() && need_dx).then(|| dy.clone());
            let dx = back(&block.body, params, body, dy, grads, need_dx || block.residual())?;
            match (dx, skip) {
                (Some(mut dx), Some(skip)) => {
                    for (a, b) in dx.data_mut().iter_mut().zip(skip.data()) {
                        *a += *b;
                    }
                    Ok(Some(dx))
                }
                (dx, _) if need_dx => Ok(dx),
                _ => Ok(None),
            }
        }
        (l, _) => Err(Error::shape(l.label(), "trace does not match graph")),
    }
}
