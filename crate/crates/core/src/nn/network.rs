//! Forward and reverse passes over a [`NetworkSpec`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lstm::{self, LstmCache};
use super::ops::{self, softmax_in_place};
use super::params::Parameters;
use super::spec::{Activation, LayerKind, LayerSpec, NetworkSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Inference runs every layer deterministically; training enables dropout
/// masks drawn from `seed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

enum Cache {
    None,
    Indices(Vec<usize>),
    Mask(Vec<f64>),
    Lstm(Box<LstmCache>),
}

/// Output of every layer (after its activation) for one batch.
pub struct Activations {
    outputs: Vec<Tensor>,
    caches: Vec<Cache>,
}

impl std::fmt::Debug for Activations {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Activations").field("outputs", &self.outputs).finish_non_exhaustive()
    }
}

impl Activations {
    pub fn outputs(&self) -> &[Tensor] {
        &self.outputs
    }

    /// Final class probabilities, `(B, n_classes)`.
    pub fn probabilities(&self) -> &Tensor {
        self.outputs.last().expect("network has layers")
    }

    pub fn into_probabilities(mut self) -> Tensor {
        self.outputs.pop().expect("network has layers")
    }
}

fn layer_seed(seed: u64, layer: usize) -> u64 {
    seed ^ (layer as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn forward(spec: &NetworkSpec, params: &Parameters, batch: &Tensor, mode: Mode) -> Result<Activations> {
    check_batch(spec, batch)?;
    params.check_against(spec)?;
    let mut outputs: Vec<Tensor> = Vec::with_capacity(spec.layers.len());
    let mut caches = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let input = if i == 0 { batch } else { &outputs[i - 1] };
        let (mut out, cache) = forward_layer(i, layer, params.layer(i), input, mode)?;
        apply_activation(layer.activation, &mut out);
        outputs.push(out);
        caches.push(cache);
    }
    Ok(Activations { outputs, caches })
}

/// Class probabilities for a batch in inference mode.
pub fn predict(spec: &NetworkSpec, params: &Parameters, batch: &Tensor) -> Result<Tensor> {
    Ok(forward(spec, params, batch, Mode::Eval)?.into_probabilities())
}

/// Mean cross-entropy of a batch.
pub fn loss(spec: &NetworkSpec, params: &Parameters, batch: &Tensor, targets: &[usize], mode: Mode) -> Result<f64> {
    let acts = forward(spec, params, batch, mode)?;
    mean_cross_entropy(acts.probabilities(), targets, spec.n_classes)
}

pub(crate) fn mean_cross_entropy(probs: &Tensor, targets: &[usize], n_classes: usize) -> Result<f64> {
    if targets.len() != probs.dim(0) {
        return Err(Error::InvalidShape(format!(
            "{} targets for a batch of {}",
            targets.len(),
            probs.dim(0)
        )));
    }
    let mut total = 0.0;
    for (b, &t) in targets.iter().enumerate() {
        total += ops::cross_entropy(probs.row(b), t, n_classes)?;
    }
    Ok(total / targets.len() as f64)
}

/// Mean cross-entropy and its gradient with respect to every parameter.
pub fn backward(
    spec: &NetworkSpec,
    params: &Parameters,
    batch: &Tensor,
    targets: &[usize],
    mode: Mode,
) -> Result<(f64, Parameters)> {
    let acts = forward(spec, params, batch, mode)?;
    let probs = acts.probabilities();
    let loss = mean_cross_entropy(probs, targets, spec.n_classes)?;

    // softmax + cross-entropy: d/dlogits = (p - onehot) / B
    let n = targets.len() as f64;
    let mut grad = probs.clone();
    let k = spec.n_classes;
    for (b, &t) in targets.iter().enumerate() {
        grad.data_mut()[b * k + t] -= 1.0;
    }
    grad.data_mut().iter_mut().for_each(|g| *g /= n);

    let mut grads = Parameters::zeros(spec);
    let last = spec.layers.len() - 1;
    for i in (0..spec.layers.len()).rev() {
        let layer = &spec.layers[i];
        if i != last {
            grad = activation_backward(layer.activation, &acts.outputs[i], grad);
        }
        let input = if i == 0 { batch } else { &acts.outputs[i - 1] };
        let (grad_in, layer_grads) = backward_layer(layer, params.layer(i), input, &acts.caches[i], &grad, i > 0);
        for (dst, src) in grads.layer_mut(i).iter_mut().zip(layer_grads) {
            *dst = src;
        }
        match grad_in {
            Some(g) => grad = g,
            None => break,
        }
    }
    Ok((loss, grads))
}

fn check_batch(spec: &NetworkSpec, batch: &Tensor) -> Result<()> {
    let shape = batch.shape();
    if shape.len() != spec.input_shape.len() + 1 || shape[1..] != spec.input_shape[..] || shape[0] == 0 {
        return Err(Error::Composition {
            layer: 0,
            reason: format!(
                "batch shape {:?} does not match input shape {:?} with a non-empty leading batch axis",
                shape, spec.input_shape
            ),
        });
    }
    Ok(())
}

fn apply_activation(activation: Activation, out: &mut Tensor) {
    match activation {
        Activation::None => {}
        Activation::ReLU => out.data_mut().iter_mut().for_each(|x| *x = x.max(0.0)),
        Activation::Softmax => {
            let width = *out.shape().last().expect("validated non-scalar output");
            out.data_mut().chunks_mut(width).for_each(softmax_in_place);
        }
    }
}

fn activation_backward(activation: Activation, output: &Tensor, mut grad: Tensor) -> Tensor {
    match activation {
        Activation::None => {}
        Activation::ReLU => {
            for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        Activation::Softmax => {
            let width = *output.shape().last().expect("validated non-scalar output");
            for (g, p) in grad.data_mut().chunks_mut(width).zip(output.data().chunks(width)) {
                let dot: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
                g.iter_mut().zip(p).for_each(|(gi, pi)| *gi = pi * (*gi - dot));
            }
        }
    }
    grad
}

fn forward_layer(index: usize, layer: &LayerSpec, params: &[Tensor], input: &Tensor, mode: Mode) -> Result<(Tensor, Cache)> {
    let batch = input.dim(0);
    let expected = layer.output_shape(index, &input.shape()[1..])?;
    let mut out_shape = vec![batch];
    out_shape.extend_from_slice(&expected);
    match layer.kind {
        LayerKind::Embedding { vocab_size, dim } => {
            let table = params[0].data();
            let mut indices = Vec::with_capacity(input.len());
            let mut out = Vec::with_capacity(input.len() * dim);
            for &v in input.data() {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::Composition {
                        layer: index,
                        reason: format!("embedding input {v} is not a token index"),
                    });
                }
                let idx = v as usize;
                if idx >= vocab_size {
                    return Err(Error::IndexOutOfRange {
                        index: idx,
                        bound: vocab_size,
                    });
                }
                indices.push(idx);
                out.extend_from_slice(&table[idx * dim..(idx + 1) * dim]);
            }
            Ok((Tensor::new(out_shape, out)?, Cache::Indices(indices)))
        }
        LayerKind::Dense { inputs, units } => {
            let (w, bias) = (params[0].data(), params[1].data());
            let mut out = vec![0.0; batch * units];
            for (x, y) in input.data().chunks(inputs).zip(out.chunks_mut(units)) {
                y.copy_from_slice(bias);
                for (i, &xi) in x.iter().enumerate() {
                    if xi != 0.0 {
                        y.iter_mut().zip(&w[i * units..(i + 1) * units]).for_each(|(yj, wij)| *yj += xi * wij);
                    }
                }
            }
            Ok((Tensor::new(out_shape, out)?, Cache::None))
        }
        LayerKind::GlobalAveragePool1D => {
            let (len, channels) = (input.dim(1), input.dim(2));
            let mut out = vec![0.0; batch * channels];
            for (x, y) in input.data().chunks(len * channels).zip(out.chunks_mut(channels)) {
                for row in x.chunks(channels) {
                    y.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                y.iter_mut().for_each(|a| *a /= len as f64);
            }
            Ok((Tensor::new(out_shape, out)?, Cache::None))
        }
        LayerKind::Conv1D {
            in_channels,
            filters,
            kernel,
        } => {
            let len = input.dim(1);
            let (w, bias) = (params[0].data(), params[1].data());
            let pad = (kernel - 1) / 2;
            let mut out = vec![0.0; batch * len * filters];
            for (x, y) in input
                .data()
                .chunks(len * in_channels)
                .zip(out.chunks_mut(len * filters))
            {
                for t in 0..len {
                    let y_t = &mut y[t * filters..(t + 1) * filters];
                    y_t.copy_from_slice(bias);
                    for dk in 0..kernel {
                        let Some(src) = (t + dk).checked_sub(pad).filter(|&s| s < len) else {
                            continue;
                        };
                        let x_s = &x[src * in_channels..(src + 1) * in_channels];
                        let w_k = &w[dk * in_channels * filters..(dk + 1) * in_channels * filters];
                        for (c, &xc) in x_s.iter().enumerate() {
                            if xc != 0.0 {
                                y_t.iter_mut()
                                    .zip(&w_k[c * filters..(c + 1) * filters])
                                    .for_each(|(a, wv)| *a += xc * wv);
                            }
                        }
                    }
                }
            }
            Ok((Tensor::new(out_shape, out)?, Cache::None))
        }
        LayerKind::BiLstm { hidden, .. } => {
            let (out, cache) = lstm::forward(input, params, hidden);
            Ok((out, Cache::Lstm(Box::new(cache))))
        }
        LayerKind::Dropout { rate } => match mode {
            Mode::Train { seed } if rate > 0.0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(layer_seed(seed, index));
                let keep = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..input.len())
                    .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
                    .collect();
                let out = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
                Ok((Tensor::new(out_shape, out)?, Cache::Mask(mask)))
            }
            _ => Ok((input.clone(), Cache::None)),
        },
        LayerKind::Activation => Ok((input.clone(), Cache::None)),
    }
}

/// Returns the gradient with respect to the layer input (when requested and
/// defined) and the parameter gradients in storage order.
fn backward_layer(
    layer: &LayerSpec,
    params: &[Tensor],
    input: &Tensor,
    cache: &Cache,
    grad: &Tensor,
    need_input_grad: bool,
) -> (Option<Tensor>, Vec<Tensor>) {
    let batch = input.dim(0);
    match (&layer.kind, cache) {
        (LayerKind::Embedding { dim, .. }, Cache::Indices(indices)) => {
            let mut d_table = Tensor::zeros(params[0].shape());
            let table = d_table.data_mut();
            for (&idx, g) in indices.iter().zip(grad.data().chunks(*dim)) {
                table[idx * dim..(idx + 1) * dim]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(a, b)| *a += b);
            }
            (None, vec![d_table])
        }
        (&LayerKind::Dense { inputs, units }, _) => {
            let w = params[0].data();
            let mut dw = vec![0.0; inputs * units];
            let mut db = vec![0.0; units];
            let mut dx = need_input_grad.then(|| vec![0.0; batch * inputs]);
            for b in 0..batch {
                let x = input.row(b);
                let g = grad.row(b);
                db.iter_mut().zip(g).for_each(|(a, v)| *a += v);
                for (i, &xi) in x.iter().enumerate() {
                    if xi != 0.0 {
                        dw[i * units..(i + 1) * units]
                            .iter_mut()
                            .zip(g)
                            .for_each(|(a, v)| *a += xi * v);
                    }
                }
                if let Some(dx) = dx.as_mut() {
                    for (i, d) in dx[b * inputs..(b + 1) * inputs].iter_mut().enumerate() {
                        *d = w[i * units..(i + 1) * units].iter().zip(g).map(|(a, v)| a * v).sum();
                    }
                }
            }
            (
                dx.map(|d| Tensor::new(input.shape().to_vec(), d).expect("dense input grad")),
                vec![
                    Tensor::new(vec![inputs, units], dw).expect("dense weight grad"),
                    Tensor::from_vec(db),
                ],
            )
        }
        (LayerKind::GlobalAveragePool1D, _) => {
            let (len, channels) = (input.dim(1), input.dim(2));
            let dx = need_input_grad.then(|| {
                let mut dx = vec![0.0; input.len()];
                for (d, g) in dx.chunks_mut(len * channels).zip(grad.data().chunks(channels)) {
                    for row in d.chunks_mut(channels) {
                        row.iter_mut().zip(g).for_each(|(a, v)| *a = v / len as f64);
                    }
                }
                Tensor::new(input.shape().to_vec(), dx).expect("pool input grad")
            });
            (dx, Vec::new())
        }
        (
            &LayerKind::Conv1D {
                in_channels,
                filters,
                kernel,
            },
            _,
        ) => {
            let len = input.dim(1);
            let w = params[0].data();
            let pad = (kernel - 1) / 2;
            let mut dw = vec![0.0; kernel * in_channels * filters];
            let mut db = vec![0.0; filters];
            let mut dx = need_input_grad.then(|| vec![0.0; input.len()]);
            for b in 0..batch {
                let x = input.row(b);
                let g = grad.row(b);
                for t in 0..len {
                    let g_t = &g[t * filters..(t + 1) * filters];
                    db.iter_mut().zip(g_t).for_each(|(a, v)| *a += v);
                    for dk in 0..kernel {
                        let Some(src) = (t + dk).checked_sub(pad).filter(|&s| s < len) else {
                            continue;
                        };
                        let x_s = &x[src * in_channels..(src + 1) * in_channels];
                        let base = dk * in_channels * filters;
                        for (c, &xc) in x_s.iter().enumerate() {
                            let off = base + c * filters;
                            if xc != 0.0 {
                                dw[off..off + filters]
                                    .iter_mut()
                                    .zip(g_t)
                                    .for_each(|(a, v)| *a += xc * v);
                            }
                            if let Some(dx) = dx.as_mut() {
                                dx[b * len * in_channels + src * in_channels + c] +=
                                    w[off..off + filters].iter().zip(g_t).map(|(a, v)| a * v).sum::<f64>();
                            }
                        }
                    }
                }
            }
            (
                dx.map(|d| Tensor::new(input.shape().to_vec(), d).expect("conv input grad")),
                vec![
                    Tensor::new(vec![kernel, in_channels, filters], dw).expect("conv weight grad"),
                    Tensor::from_vec(db),
                ],
            )
        }
        (LayerKind::BiLstm { .. }, Cache::Lstm(cache)) => lstm::backward(input, params, cache, grad, need_input_grad),
        (LayerKind::Dropout { .. }, Cache::Mask(mask)) => {
            let dx = grad.data().iter().zip(mask).map(|(g, m)| g * m).collect();
            (Some(Tensor::new(grad.shape().to_vec(), dx).expect("dropout grad")), Vec::new())
        }
        (LayerKind::Dropout { .. } | LayerKind::Activation, _) => (Some(grad.clone()), Vec::new()),
        (kind, _) => unreachable!("no cache recorded for {kind:?}"),
    }
}
