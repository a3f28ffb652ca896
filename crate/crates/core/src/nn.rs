//! Minimal sequential neural-network engine.
//!
//! Supports exactly the fixed layer set the two classifier stages need:
//! 1-D and 2-D valid convolutions, non-overlapping max pooling, ReLU,
//! flatten, dense, and a trailing softmax trained with mean cross-entropy
//! and Adam. Everything is f64 and single-threaded; given a seed, training
//! is bit-reproducible. A prefix of layers can be frozen so fine-tuning
//! touches only the tail (transfer learning), and checkpoints serialize
//! parameters as little-endian f32 blobs behind a `CWLNN1` magic header.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::rng::seeded_rng;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer {layer}: shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { layer: usize, expected: String, got: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("k_trainable_tail {k} exceeds the {layers}-layer model")]
    KTooLarge { k: usize, layers: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data length mismatch");
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

fn shape_str(s: &[usize]) -> String {
    format!("{s:?}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv1D { out_ch: usize, kernel: usize, stride: usize },
    Conv2D { out_ch: usize, kernel: usize, stride: usize },
    MaxPool1D { size: usize },
    MaxPool2D { size: usize },
    ReLU,
    Flatten,
    Dense { out_dim: usize },
    Softmax,
}

impl LayerSpec {
    fn validate(&self, layer: usize) -> Result<(), NnError> {
        let bad = |what: &str| NnError::InvalidConfig(format!("layer {layer}: {what} must be >= 1"));
        match *self {
            LayerSpec::Conv1D { out_ch, kernel, stride } | LayerSpec::Conv2D { out_ch, kernel, stride } => {
                if out_ch == 0 {
                    return Err(bad("out_ch"));
                }
                if kernel == 0 {
                    return Err(bad("kernel"));
                }
                if stride == 0 {
                    return Err(bad("stride"));
                }
            }
            LayerSpec::MaxPool1D { size } | LayerSpec::MaxPool2D { size } => {
                if size == 0 {
                    return Err(bad("size"));
                }
            }
            LayerSpec::Dense { out_dim } => {
                if out_dim == 0 {
                    return Err(bad("out_dim"));
                }
            }
            LayerSpec::ReLU | LayerSpec::Flatten | LayerSpec::Softmax => {}
        }
        Ok(())
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv1D { .. } | LayerSpec::Conv2D { .. } | LayerSpec::Dense { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub spec: LayerSpec,
    /// Weights: Conv1D [out_ch, in_ch, k], Conv2D [out_ch, in_ch, k, k], Dense [out, in].
    pub weights: Option<Tensor>,
    pub bias: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Layers with index below this receive no gradients or updates.
    pub frozen_prefix: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            epochs: 80,
            seed: 0,
            frozen_prefix: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), NnError> {
        if !(self.lr >= 0.0) {
            return Err(NnError::InvalidConfig("lr must be >= 0".into()));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(NnError::InvalidConfig("betas must lie in (0,1)".into()));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-layer parameter gradients; `None` for frozen or parameterless layers.
pub type Grads = Vec<Option<(Tensor, Tensor)>>;

#[derive(Debug, Clone)]
pub struct Model {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
    /// Baked-in freeze boundary (set by `pretrain_and_freeze`); training
    /// freezes `max(model.frozen_prefix, cfg.frozen_prefix)` layers.
    pub frozen_prefix: usize,
}

fn out_shape(spec: &LayerSpec, input: &[usize], layer: usize) -> Result<Vec<usize>, NnError> {
    let err = |expected: String| NnError::ShapeMismatch { layer, expected, got: shape_str(input) };
    match *spec {
        LayerSpec::Conv1D { out_ch, kernel, stride } => {
            if input.len() != 2 {
                return Err(err("[channels, length]".into()));
            }
            let len = input[1];
            if len < kernel {
                return Err(err(format!("length >= kernel {kernel}")));
            }
            Ok(vec![out_ch, (len - kernel) / stride + 1])
        }
        LayerSpec::Conv2D { out_ch, kernel, stride } => {
            if input.len() != 3 {
                return Err(err("[channels, height, width]".into()));
            }
            let (h, w) = (input[1], input[2]);
            if h < kernel || w < kernel {
                return Err(err(format!("height and width >= kernel {kernel}")));
            }
            Ok(vec![out_ch, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
        }
        LayerSpec::MaxPool1D { size } => {
            if input.len() != 2 || input[1] < size {
                return Err(err(format!("[channels, length >= {size}]")));
            }
            Ok(vec![input[0], input[1] / size])
        }
        LayerSpec::MaxPool2D { size } => {
            if input.len() != 3 || input[1] < size || input[2] < size {
                return Err(err(format!("[channels, h >= {size}, w >= {size}]")));
            }
            Ok(vec![input[0], input[1] / size, input[2] / size])
        }
        LayerSpec::ReLU => Ok(input.to_vec()),
        LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        LayerSpec::Dense { out_dim } => {
            if input.len() != 1 {
                return Err(err("[features] (flatten first)".into()));
            }
            Ok(vec![out_dim])
        }
        LayerSpec::Softmax => {
            if input.len() != 1 {
                return Err(err("[features]".into()));
            }
            Ok(input.to_vec())
        }
    }
}

impl Model {
    /// Build a model with He-uniform weights and zero biases, seeded.
    pub fn new(input_shape: Vec<usize>, specs: &[LayerSpec], seed: u64) -> Result<Self, NnError> {
        let mut rng = seeded_rng(seed);
        let mut shape = input_shape.clone();
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            spec.validate(i)?;
            let next = out_shape(spec, &shape, i)?;
            let (weights, bias) = match *spec {
                LayerSpec::Conv1D { out_ch, kernel, .. } => {
                    let in_ch = shape[0];
                    let fan_in = in_ch * kernel;
                    (
                        Some(he_uniform(vec![out_ch, in_ch, kernel], fan_in, &mut rng)),
                        Some(Tensor::zeros(vec![out_ch])),
                    )
                }
                LayerSpec::Conv2D { out_ch, kernel, .. } => {
                    let in_ch = shape[0];
                    let fan_in = in_ch * kernel * kernel;
                    (
                        Some(he_uniform(vec![out_ch, in_ch, kernel, kernel], fan_in, &mut rng)),
                        Some(Tensor::zeros(vec![out_ch])),
                    )
                }
                LayerSpec::Dense { out_dim } => {
                    let fan_in = shape[0];
                    (
                        Some(he_uniform(vec![out_dim, fan_in], fan_in, &mut rng)),
                        Some(Tensor::zeros(vec![out_dim])),
                    )
                }
                _ => (None, None),
            };
            layers.push(Layer { spec: *spec, weights, bias });
            shape = next;
        }
        Ok(Self { input_shape, layers, frozen_prefix: 0 })
    }

    pub fn output_shape(&self) -> Result<Vec<usize>, NnError> {
        let mut shape = self.input_shape.clone();
        for (i, l) in self.layers.iter().enumerate() {
            shape = out_shape(&l.spec, &shape, i)?;
        }
        Ok(shape)
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.weights.as_ref().map_or(0, Tensor::numel) + l.bias.as_ref().map_or(0, Tensor::numel)
            })
            .sum()
    }

    /// FNV-1a over the exact f64 bit patterns of layers `[0, upto)`.
    pub fn param_checksum(&self, upto: usize) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |t: &Tensor| {
            for v in &t.data {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        };
        for l in self.layers.iter().take(upto) {
            if let Some(w) = &l.weights {
                eat(w);
            }
            if let Some(b) = &l.bias {
                eat(b);
            }
        }
        h
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = apply(layer, &cur, i)?;
        }
        Ok(cur)
    }

    /// Run only layers `[0, upto)`; the frozen-feature shortcut for
    /// fine-tuning uses this to cache the boundary activation.
    pub fn forward_prefix(&self, x: &Tensor, upto: usize) -> Result<Tensor, NnError> {
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().take(upto).enumerate() {
            cur = apply(layer, &cur, i)?;
        }
        Ok(cur)
    }

    /// Clone layers `[at, end)` as a standalone model whose input is the
    /// boundary activation shape.
    pub fn split_tail(&self, at: usize) -> Result<Model, NnError> {
        assert!(at <= self.layers.len());
        let mut shape = self.input_shape.clone();
        for (i, l) in self.layers.iter().take(at).enumerate() {
            shape = out_shape(&l.spec, &shape, i)?;
        }
        Ok(Model { input_shape: shape, layers: self.layers[at..].to_vec(), frozen_prefix: 0 })
    }

    /// Copy parameters of a trained tail (from `split_tail(at)`) back in.
    pub fn write_tail_params(&mut self, at: usize, tail: &Model) {
        assert_eq!(self.layers.len() - at, tail.layers.len());
        for (dst, src) in self.layers[at..].iter_mut().zip(&tail.layers) {
            dst.weights = src.weights.clone();
            dst.bias = src.bias.clone();
        }
    }

    fn trace(&self, x: &Tensor) -> Result<Vec<Tensor>, NnError> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let next = apply(layer, acts.last().unwrap(), i)?;
            acts.push(next);
        }
        Ok(acts)
    }
}

fn he_uniform(shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(shape, data)
}

fn apply(layer: &Layer, x: &Tensor, i: usize) -> Result<Tensor, NnError> {
    let shape = out_shape(&layer.spec, &x.shape, i)?;
    let mut y = Tensor::zeros(shape);
    match layer.spec {
        LayerSpec::Conv1D { out_ch, kernel, stride } => {
            let (in_ch, len) = (x.shape[0], x.shape[1]);
            let out_len = y.shape[1];
            let w = layer.weights.as_ref().unwrap();
            let b = layer.bias.as_ref().unwrap();
            for o in 0..out_ch {
                let y_row = &mut y.data[o * out_len..(o + 1) * out_len];
                y_row.iter_mut().for_each(|v| *v = b.data[o]);
                for c in 0..in_ch {
                    let w_row = &w.data[(o * in_ch + c) * kernel..(o * in_ch + c + 1) * kernel];
                    let x_row = &x.data[c * len..(c + 1) * len];
                    for (j, v) in y_row.iter_mut().enumerate() {
                        let xs = &x_row[j * stride..j * stride + kernel];
                        let mut acc = 0.0;
                        for t in 0..kernel {
                            acc += w_row[t] * xs[t];
                        }
                        *v += acc;
                    }
                }
            }
        }
        LayerSpec::Conv2D { out_ch, kernel, stride } => {
            let (in_ch, h, w_in) = (x.shape[0], x.shape[1], x.shape[2]);
            let (oh, ow) = (y.shape[1], y.shape[2]);
            let w = layer.weights.as_ref().unwrap();
            let b = layer.bias.as_ref().unwrap();
            for o in 0..out_ch {
                for r in 0..oh {
                    for c in 0..ow {
                        let mut acc = b.data[o];
                        for ci in 0..in_ch {
                            for kr in 0..kernel {
                                let x_off = ci * h * w_in + (r * stride + kr) * w_in + c * stride;
                                let w_off = ((o * in_ch + ci) * kernel + kr) * kernel;
                                let xs = &x.data[x_off..x_off + kernel];
                                let ws = &w.data[w_off..w_off + kernel];
                                for t in 0..kernel {
                                    acc += ws[t] * xs[t];
                                }
                            }
                        }
                        y.data[o * oh * ow + r * ow + c] = acc;
                    }
                }
            }
        }
        LayerSpec::MaxPool1D { size } => {
            let (ch, len) = (x.shape[0], x.shape[1]);
            let out_len = y.shape[1];
            for c in 0..ch {
                for j in 0..out_len {
                    let seg = &x.data[c * len + j * size..c * len + j * size + size];
                    y.data[c * out_len + j] = seg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                }
            }
        }
        LayerSpec::MaxPool2D { size } => {
            let (ch, h, w_in) = (x.shape[0], x.shape[1], x.shape[2]);
            let (oh, ow) = (y.shape[1], y.shape[2]);
            for c in 0..ch {
                for r in 0..oh {
                    for col in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        for kr in 0..size {
                            let off = c * h * w_in + (r * size + kr) * w_in + col * size;
                            for v in &x.data[off..off + size] {
                                best = best.max(*v);
                            }
                        }
                        y.data[c * oh * ow + r * ow + col] = best;
                    }
                }
            }
        }
        LayerSpec::ReLU => {
            for (out, v) in y.data.iter_mut().zip(&x.data) {
                *out = v.max(0.0);
            }
        }
        LayerSpec::Flatten => {
            y.data.copy_from_slice(&x.data);
        }
        LayerSpec::Dense { out_dim } => {
            let in_dim = x.shape[0];
            let w = layer.weights.as_ref().unwrap();
            let b = layer.bias.as_ref().unwrap();
            for o in 0..out_dim {
                let row = &w.data[o * in_dim..(o + 1) * in_dim];
                let mut acc = b.data[o];
                for t in 0..in_dim {
                    acc += row[t] * x.data[t];
                }
                y.data[o] = acc;
            }
        }
        LayerSpec::Softmax => {
            let max = x.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (out, v) in y.data.iter_mut().zip(&x.data) {
                *out = (v - max).exp();
                sum += *out;
            }
            y.data.iter_mut().for_each(|v| *v /= sum);
        }
    }
    Ok(y)
}

/// Mean softmax cross-entropy of the model on a labeled batch.
pub fn loss(model: &Model, batch: &[(Tensor, usize)]) -> Result<f64, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut total = 0.0;
    for (x, label) in batch {
        let p = model.forward(x)?;
        total += -(p.data[*label].max(1e-300)).ln();
    }
    Ok(total / batch.len() as f64)
}

/// Backpropagate mean softmax cross-entropy over a batch. The model must
/// end with a Softmax layer (the loss gradient is fused through it).
/// Layers below the effective freeze boundary get `None` entries.
pub fn backward(model: &Model, batch: &[(Tensor, usize)], frozen_prefix: usize) -> Result<(f64, Grads), NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let n_layers = model.layers.len();
    if !matches!(model.layers.last().map(|l| l.spec), Some(LayerSpec::Softmax)) {
        return Err(NnError::InvalidConfig("backward requires a trailing Softmax layer".into()));
    }
    let stop = frozen_prefix.max(model.frozen_prefix).min(n_layers);

    let mut grads: Grads = model
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if i >= stop && l.spec.has_params() {
                Some((
                    Tensor::zeros(l.weights.as_ref().unwrap().shape.clone()),
                    Tensor::zeros(l.bias.as_ref().unwrap().shape.clone()),
                ))
            } else {
                None
            }
        })
        .collect();

    let scale = 1.0 / batch.len() as f64;
    let mut total_loss = 0.0;
    for (x, label) in batch {
        let acts = model.trace(x)?;
        let probs = acts.last().unwrap();
        total_loss += -(probs.data[*label].max(1e-300)).ln();

        // fused softmax + cross-entropy gradient at the softmax input
        let mut delta = probs.clone();
        delta.data[*label] -= 1.0;
        delta.data.iter_mut().for_each(|v| *v *= scale);
        delta.shape = acts[n_layers - 1].shape.clone();

        // walk below the softmax layer
        for i in (stop..n_layers - 1).rev() {
            let input = &acts[i];
            delta = backprop_layer(&model.layers[i], input, &delta, grads[i].as_mut(), i > stop)?;
        }
    }

    Ok((total_loss * scale, grads))
}

/// Gradient of one layer: accumulates parameter grads (if requested) and
/// returns the input delta (skipped when `need_input_delta` is false).
fn backprop_layer(
    layer: &Layer,
    input: &Tensor,
    delta: &Tensor,
    grad: Option<&mut (Tensor, Tensor)>,
    need_input_delta: bool,
) -> Result<Tensor, NnError> {
    let mut dx = if need_input_delta { Tensor::zeros(input.shape.clone()) } else { Tensor::zeros(vec![0]) };
    match layer.spec {
        LayerSpec::Conv1D { out_ch, kernel, stride } => {
            let (in_ch, len) = (input.shape[0], input.shape[1]);
            let out_len = delta.shape[1];
            let w = layer.weights.as_ref().unwrap();
            if let Some((dw, db)) = grad {
                for o in 0..out_ch {
                    let d_row = &delta.data[o * out_len..(o + 1) * out_len];
                    db.data[o] += d_row.iter().sum::<f64>();
                    for c in 0..in_ch {
                        let x_row = &input.data[c * len..(c + 1) * len];
                        let dw_row = &mut dw.data[(o * in_ch + c) * kernel..(o * in_ch + c + 1) * kernel];
                        for (j, &d) in d_row.iter().enumerate() {
                            let xs = &x_row[j * stride..j * stride + kernel];
                            for t in 0..kernel {
                                dw_row[t] += d * xs[t];
                            }
                        }
                    }
                }
            }
            if need_input_delta {
                for o in 0..out_ch {
                    let d_row = &delta.data[o * out_len..(o + 1) * out_len];
                    for c in 0..in_ch {
                        let w_row = &w.data[(o * in_ch + c) * kernel..(o * in_ch + c + 1) * kernel];
                        let dx_row = &mut dx.data[c * len..(c + 1) * len];
                        for (j, &d) in d_row.iter().enumerate() {
                            let base = j * stride;
                            for t in 0..kernel {
                                dx_row[base + t] += d * w_row[t];
                            }
                        }
                    }
                }
            }
        }
        LayerSpec::Conv2D { out_ch, kernel, stride } => {
            let (in_ch, h, w_in) = (input.shape[0], input.shape[1], input.shape[2]);
            let (oh, ow) = (delta.shape[1], delta.shape[2]);
            let w = layer.weights.as_ref().unwrap();
            if let Some((dw, db)) = grad {
                for o in 0..out_ch {
                    for r in 0..oh {
                        for c in 0..ow {
                            let d = delta.data[o * oh * ow + r * ow + c];
                            db.data[o] += d;
                            for ci in 0..in_ch {
                                for kr in 0..kernel {
                                    let x_off = ci * h * w_in + (r * stride + kr) * w_in + c * stride;
                                    let w_off = ((o * in_ch + ci) * kernel + kr) * kernel;
                                    for t in 0..kernel {
                                        dw.data[w_off + t] += d * input.data[x_off + t];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if need_input_delta {
                for o in 0..out_ch {
                    for r in 0..oh {
                        for c in 0..ow {
                            let d = delta.data[o * oh * ow + r * ow + c];
                            for ci in 0..in_ch {
                                for kr in 0..kernel {
                                    let x_off = ci * h * w_in + (r * stride + kr) * w_in + c * stride;
                                    let w_off = ((o * in_ch + ci) * kernel + kr) * kernel;
                                    for t in 0..kernel {
                                        dx.data[x_off + t] += d * w.data[w_off + t];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        LayerSpec::MaxPool1D { size } => {
            if need_input_delta {
                let (ch, len) = (input.shape[0], input.shape[1]);
                let out_len = delta.shape[1];
                for c in 0..ch {
                    for j in 0..out_len {
                        let base = c * len + j * size;
                        let seg = &input.data[base..base + size];
                        let mut arg = 0;
                        for t in 1..size {
                            if seg[t] > seg[arg] {
                                arg = t; // first maximum wins ties
                            }
                        }
                        dx.data[base + arg] += delta.data[c * out_len + j];
                    }
                }
            }
        }
        LayerSpec::MaxPool2D { size } => {
            if need_input_delta {
                let (ch, h, w_in) = (input.shape[0], input.shape[1], input.shape[2]);
                let (oh, ow) = (delta.shape[1], delta.shape[2]);
                for c in 0..ch {
                    for r in 0..oh {
                        for col in 0..ow {
                            let mut best = f64::NEG_INFINITY;
                            let mut arg = 0;
                            for kr in 0..size {
                                let off = c * h * w_in + (r * size + kr) * w_in + col * size;
                                for t in 0..size {
                                    if input.data[off + t] > best {
                                        best = input.data[off + t];
                                        arg = off + t;
                                    }
                                }
                            }
                            dx.data[arg] += delta.data[c * oh * ow + r * ow + col];
                        }
                    }
                }
            }
        }
        LayerSpec::ReLU => {
            if need_input_delta {
                for ((out, &d), &v) in dx.data.iter_mut().zip(&delta.data).zip(&input.data) {
                    *out = if v > 0.0 { d } else { 0.0 };
                }
            }
        }
        LayerSpec::Flatten => {
            if need_input_delta {
                dx.data.copy_from_slice(&delta.data);
            }
        }
        LayerSpec::Dense { out_dim } => {
            let in_dim = input.shape[0];
            let w = layer.weights.as_ref().unwrap();
            if let Some((dw, db)) = grad {
                for o in 0..out_dim {
                    let d = delta.data[o];
                    db.data[o] += d;
                    let dw_row = &mut dw.data[o * in_dim..(o + 1) * in_dim];
                    for t in 0..in_dim {
                        dw_row[t] += d * input.data[t];
                    }
                }
            }
            if need_input_delta {
                for o in 0..out_dim {
                    let d = delta.data[o];
                    let w_row = &w.data[o * in_dim..(o + 1) * in_dim];
                    for t in 0..in_dim {
                        dx.data[t] += d * w_row[t];
                    }
                }
            }
        }
        LayerSpec::Softmax => {
            // handled by the fused cross-entropy gradient; a standalone
            // softmax backward is the full Jacobian product
            if need_input_delta {
                let p = apply(layer, input, 0)?;
                let dot: f64 = p.data.iter().zip(&delta.data).map(|(pi, di)| pi * di).sum();
                for ((out, &pi), &di) in dx.data.iter_mut().zip(&p.data).zip(&delta.data) {
                    *out = pi * (di - dot);
                }
            }
        }
    }
    Ok(dx)
}

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Grads,
    v: Grads,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        let zeros: Grads = model
            .layers
            .iter()
            .map(|l| {
                l.spec.has_params().then(|| {
                    (
                        Tensor::zeros(l.weights.as_ref().unwrap().shape.clone()),
                        Tensor::zeros(l.bias.as_ref().unwrap().shape.clone()),
                    )
                })
            })
            .collect();
        Self { m: zeros.clone(), v: zeros }
    }
}

/// One bias-corrected Adam update; `t` starts at 1. Layers without gradient
/// entries (frozen or parameterless) are untouched.
pub fn adam_step(model: &mut Model, grads: &Grads, state: &mut AdamState, cfg: &TrainConfig, t: usize) {
    assert!(t >= 1, "Adam step index starts at 1");
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for (i, g) in grads.iter().enumerate() {
        let Some((gw, gb)) = g else { continue };
        let layer = &mut model.layers[i];
        let (Some(ms), Some(vs)) = (state.m[i].as_mut(), state.v[i].as_mut()) else { continue };
        let w = layer.weights.as_mut().unwrap();
        let b = layer.bias.as_mut().unwrap();
        for (dst, grad, m, v) in [
            (&mut w.data, &gw.data, &mut ms.0.data, &mut vs.0.data),
            (&mut b.data, &gb.data, &mut ms.1.data, &mut vs.1.data),
        ] {
            for j in 0..dst.len() {
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * grad[j];
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * grad[j] * grad[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                dst[j] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    /// Mean running loss of each epoch (measured on pre-update batches).
    pub loss: Vec<f64>,
    /// Running train accuracy of each epoch.
    pub accuracy: Vec<f64>,
}

/// Mini-batch Adam training, deterministic under `cfg.seed`.
pub fn train(model: &mut Model, data: &[(Tensor, usize)], cfg: &TrainConfig) -> Result<TrainHistory, NnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut state = AdamState::new(model);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut t = 0;
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            for &i in chunk {
                batch.push((data[i].0.clone(), data[i].1));
            }
            // running metrics from the pre-update forward pass
            for (x, label) in &batch {
                let p = model.forward(x)?;
                if argmax(&p.data) == *label {
                    correct += 1;
                }
            }
            let (batch_loss, grads) = backward(model, &batch, cfg.frozen_prefix)?;
            epoch_loss += batch_loss * batch.len() as f64;
            t += 1;
            adam_step(model, &grads, &mut state, cfg, t);
        }
        history.loss.push(epoch_loss / data.len() as f64);
        history.accuracy.push(correct as f64 / data.len() as f64);
    }
    Ok(history)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Train on a surrogate task, then freeze everything except the last
/// `k_trainable_tail` parameterized layers. `k` may extend past the
/// parameterized layers up to the full layer count (freezing nothing).
pub fn pretrain_and_freeze(
    surrogate_data: &[(Tensor, usize)],
    mut model: Model,
    cfg: &TrainConfig,
    k_trainable_tail: usize,
) -> Result<(Model, TrainHistory), NnError> {
    let n_layers = model.layers.len();
    if k_trainable_tail > n_layers {
        return Err(NnError::KTooLarge { k: k_trainable_tail, layers: n_layers });
    }
    let pretrain_cfg = TrainConfig { frozen_prefix: 0, ..cfg.clone() };
    let history = train(&mut model, surrogate_data, &pretrain_cfg)?;

    // freeze up to (exclusive) the k-th parameterized layer from the end;
    // k = 0 freezes everything, k >= #parameterized freezes nothing
    let mut boundary = n_layers;
    if k_trainable_tail > 0 {
        let mut remaining = k_trainable_tail;
        boundary = 0;
        for (i, l) in model.layers.iter().enumerate().rev() {
            if l.spec.has_params() {
                remaining -= 1;
                if remaining == 0 {
                    boundary = i;
                    break;
                }
            }
        }
    }
    model.frozen_prefix = boundary;
    Ok((model, history))
}

/// Max relative error between analytic and central finite-difference
/// gradients over every parameter (64-bit, step `h`).
pub fn finite_difference_max_rel_err(model: &mut Model, batch: &[(Tensor, usize)], h: f64) -> Result<f64, NnError> {
    let (_, grads) = backward(model, batch, 0)?;
    let mut worst = 0.0f64;
    for li in 0..model.layers.len() {
        let Some((gw, gb)) = grads[li].as_ref() else { continue };
        for (which, analytic) in [(0, gw), (1, gb)] {
            for j in 0..analytic.data.len() {
                let read = |m: &Model| -> f64 {
                    let l = &m.layers[li];
                    let t = if which == 0 { l.weights.as_ref() } else { l.bias.as_ref() };
                    t.unwrap().data[j]
                };
                let write = |m: &mut Model, v: f64| {
                    let l = &mut m.layers[li];
                    let t = if which == 0 { l.weights.as_mut() } else { l.bias.as_mut() };
                    t.unwrap().data[j] = v;
                };
                let orig = read(model);
                write(model, orig + h);
                let lp = loss(model, batch)?;
                write(model, orig - h);
                let lm = loss(model, batch)?;
                write(model, orig);
                let fd = (lp - lm) / (2.0 * h);
                let an = analytic.data[j];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}

/// Multiclass 1-D CNN over 848-sample feature vectors (5 outputs).
pub fn multiclass_arch() -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv1D { out_ch: 16, kernel: 7, stride: 2 },
        LayerSpec::ReLU,
        LayerSpec::MaxPool1D { size: 2 },
        LayerSpec::Conv1D { out_ch: 32, kernel: 5, stride: 2 },
        LayerSpec::ReLU,
        LayerSpec::MaxPool1D { size: 2 },
        LayerSpec::Flatten,
        LayerSpec::Dense { out_dim: 64 },
        LayerSpec::ReLU,
        LayerSpec::Dense { out_dim: 5 },
        LayerSpec::Softmax,
    ]
}

/// Binary 2-D CNN over 128x128 grayscale scalogram images.
pub fn binary_arch() -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2D { out_ch: 8, kernel: 5, stride: 2 },
        LayerSpec::ReLU,
        LayerSpec::MaxPool2D { size: 2 },
        LayerSpec::Conv2D { out_ch: 16, kernel: 3, stride: 2 },
        LayerSpec::ReLU,
        LayerSpec::Flatten,
        LayerSpec::Dense { out_dim: 32 },
        LayerSpec::ReLU,
        LayerSpec::Dense { out_dim: 2 },
        LayerSpec::Softmax,
    ]
}

const CHECKPOINT_MAGIC: &[u8; 6] = b"CWLNN1";

/// Checkpoint layout (all integers little-endian u32 unless noted):
/// magic `CWLNN1` | input rank, dims | frozen_prefix | layer count |
/// per layer: u8 tag + its u32 fields | per parameterized layer:
/// weight numel + f32 values, bias numel + f32 values.
pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), NnError> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(CHECKPOINT_MAGIC)?;
    let w32 = |f: &mut BufWriter<File>, v: usize| f.write_all(&(v as u32).to_le_bytes());
    w32(&mut f, model.input_shape.len())?;
    for &d in &model.input_shape {
        w32(&mut f, d)?;
    }
    w32(&mut f, model.frozen_prefix)?;
    w32(&mut f, model.layers.len())?;
    for l in &model.layers {
        match l.spec {
            LayerSpec::Conv1D { out_ch, kernel, stride } => {
                f.write_all(&[1])?;
                w32(&mut f, out_ch)?;
                w32(&mut f, kernel)?;
                w32(&mut f, stride)?;
            }
            LayerSpec::Conv2D { out_ch, kernel, stride } => {
                f.write_all(&[2])?;
                w32(&mut f, out_ch)?;
                w32(&mut f, kernel)?;
                w32(&mut f, stride)?;
            }
            LayerSpec::MaxPool1D { size } => {
                f.write_all(&[3])?;
                w32(&mut f, size)?;
            }
            LayerSpec::MaxPool2D { size } => {
                f.write_all(&[4])?;
                w32(&mut f, size)?;
            }
            LayerSpec::ReLU => f.write_all(&[5])?,
            LayerSpec::Flatten => f.write_all(&[6])?,
            LayerSpec::Dense { out_dim } => {
                f.write_all(&[7])?;
                w32(&mut f, out_dim)?;
            }
            LayerSpec::Softmax => f.write_all(&[8])?,
        }
    }
    for l in &model.layers {
        if !l.spec.has_params() {
            continue;
        }
        for t in [l.weights.as_ref().unwrap(), l.bias.as_ref().unwrap()] {
            w32(&mut f, t.numel())?;
            for v in &t.data {
                f.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
    }
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model, NnError> {
    let mut f = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 6];
    f.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NnError::BadCheckpoint("wrong magic".into()));
    }
    let r32 = |f: &mut BufReader<File>| -> Result<usize, NnError> {
        let mut b = [0u8; 4];
        f.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b) as usize)
    };
    let r8 = |f: &mut BufReader<File>| -> Result<u8, NnError> {
        let mut b = [0u8; 1];
        f.read_exact(&mut b)?;
        Ok(b[0])
    };
    let rank = r32(&mut f)?;
    let mut input_shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        input_shape.push(r32(&mut f)?);
    }
    let frozen_prefix = r32(&mut f)?;
    let n_layers = r32(&mut f)?;
    let mut specs = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let spec = match r8(&mut f)? {
            1 => LayerSpec::Conv1D { out_ch: r32(&mut f)?, kernel: r32(&mut f)?, stride: r32(&mut f)? },
            2 => LayerSpec::Conv2D { out_ch: r32(&mut f)?, kernel: r32(&mut f)?, stride: r32(&mut f)? },
            3 => LayerSpec::MaxPool1D { size: r32(&mut f)? },
            4 => LayerSpec::MaxPool2D { size: r32(&mut f)? },
            5 => LayerSpec::ReLU,
            6 => LayerSpec::Flatten,
            7 => LayerSpec::Dense { out_dim: r32(&mut f)? },
            8 => LayerSpec::Softmax,
            tag => return Err(NnError::BadCheckpoint(format!("unknown layer tag {tag}"))),
        };
        specs.push(spec);
    }
    let mut model = Model::new(input_shape, &specs, 0)?;
    model.frozen_prefix = frozen_prefix;
    for l in &mut model.layers {
        if !l.spec.has_params() {
            continue;
        }
        for t in [l.weights.as_mut().unwrap(), l.bias.as_mut().unwrap()] {
            let n = r32(&mut f)?;
            if n != t.numel() {
                return Err(NnError::BadCheckpoint(format!("blob size {n} != expected {}", t.numel())));
            }
            for v in t.data.iter_mut() {
                let mut b = [0u8; 4];
                f.read_exact(&mut b)?;
                *v = f32::from_le_bytes(b) as f64;
            }
        }
    }
    Ok(model)
}
