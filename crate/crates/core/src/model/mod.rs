//! Sequential CNN with hand-rolled reverse-mode gradients.

pub mod layers;
pub mod loss;
pub mod train;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tensor::Tensor;
pub use layers::{LayerDesc, LayerShape};
pub use loss::{argmax, LossKind};
pub use train::{TrainHyper, TrainResult};

/// Description of a sequential network: input planes, class count, layer stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Input shape as (channels, height, width).
    pub input: (usize, usize, usize),
    /// Number of output classes; the last layer must produce exactly this many logits.
    pub classes: usize,
    pub layers: Vec<LayerDesc>,
}

impl NetworkSpec {
    /// The small desk-scale architecture used throughout:
    /// conv16/s1 - relu - conv32/s2 - relu - conv64/s2 - relu - flatten - dense(K).
    pub fn desk(input: (usize, usize, usize), classes: usize) -> Self {
        NetworkSpec {
            input,
            classes,
            layers: vec![
                LayerDesc::Conv2d { out_channels: 16, kernel: 3, stride: 1, pad: 1 },
                LayerDesc::Relu,
                LayerDesc::Conv2d { out_channels: 32, kernel: 3, stride: 2, pad: 1 },
                LayerDesc::Relu,
                LayerDesc::Conv2d { out_channels: 64, kernel: 3, stride: 2, pad: 1 },
                LayerDesc::Relu,
                LayerDesc::Flatten,
                LayerDesc::Dense { out: classes },
            ],
        }
    }

    /// Shape after each layer. Fails with the index of the first incompatible layer.
    pub fn shapes(&self) -> Result<Vec<LayerShape>> {
        let (c, h, w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::shape("input shape must have positive channels and extent"));
        }
        if self.classes == 0 {
            return Err(Error::shape("class count must be positive"));
        }
        let mut cur = LayerShape::Map { c, h, w };
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, desc) in self.layers.iter().enumerate() {
            cur = layers::output_shape(desc, cur, i)?;
            out.push(cur);
        }
        match out.last() {
            Some(LayerShape::Flat(n)) if *n == self.classes => Ok(out),
            Some(other) => Err(Error::shape(format!(
                "network must end in a flat vector of {} logits, got {:?}",
                self.classes, other
            ))),
            None => Err(Error::shape("network has no layers")),
        }
    }

    /// Indices of all relu layers; the default feature-tap set.
    pub fn relu_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, d)| matches!(d, LayerDesc::Relu))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Gradients for named parameters, accumulated in f64.
pub type GradMap = BTreeMap<String, Vec<f64>>;

/// A network spec plus its parameter tensors.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    spec: NetworkSpec,
    shapes: Vec<LayerShape>,
    params: BTreeMap<String, Tensor>,
    tap_ids: Vec<usize>,
}

fn weight_name(i: usize) -> String {
    format!("layer{i}.weight")
}

fn bias_name(i: usize) -> String {
    format!("layer{i}.bias")
}

impl TrainedModel {
    /// Fresh model with He fan-in initialised weights and zero biases.
    /// Each parameterised layer draws from its own seed stream, so the result
    /// is reproducible bit for bit for a given seed.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<TrainedModel> {
        use rand_distr::{Distribution, Normal};
        let shapes = spec.shapes()?;
        let mut params = BTreeMap::new();
        let mut in_shape = LayerShape::Map { c: spec.input.0, h: spec.input.1, w: spec.input.2 };
        for (i, desc) in spec.layers.iter().enumerate() {
            match (desc, in_shape) {
                (LayerDesc::Conv2d { out_channels, kernel, .. }, LayerShape::Map { c, .. }) => {
                    let fan_in = c * kernel * kernel;
                    let std = (2.0 / fan_in as f64).sqrt();
                    let normal = Normal::new(0.0f64, std).expect("std is positive");
                    let mut rng = stream_rng(seed, 0x100 + i as u64);
                    let n = out_channels * c * kernel * kernel;
                    let data: Vec<f32> = (0..n).map(|_| normal.sample(&mut rng) as f32).collect();
                    params.insert(
                        weight_name(i),
                        Tensor::new(vec![*out_channels, c, *kernel, *kernel], data)?,
                    );
                    params.insert(bias_name(i), Tensor::zeros(vec![*out_channels]));
                }
                (LayerDesc::Dense { out }, LayerShape::Flat(n_in)) => {
                    let std = (2.0 / n_in as f64).sqrt();
                    let normal = Normal::new(0.0f64, std).expect("std is positive");
                    let mut rng = stream_rng(seed, 0x100 + i as u64);
                    let data: Vec<f32> =
                        (0..out * n_in).map(|_| normal.sample(&mut rng) as f32).collect();
                    params.insert(weight_name(i), Tensor::new(vec![*out, n_in], data)?);
                    params.insert(bias_name(i), Tensor::zeros(vec![*out]));
                }
                _ => {}
            }
            in_shape = shapes[i];
        }
        let tap_ids = spec.relu_layers();
        Ok(TrainedModel { spec: spec.clone(), shapes, params, tap_ids })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    /// Relu layer indices whose outputs serve as white-box feature taps.
    pub fn tap_ids(&self) -> &[usize] {
        &self.tap_ids
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    /// Borrow (weight, bias) slices per layer, resolved once per batch call.
    fn resolve_params(&self) -> Vec<Option<(&[f32], &[f32])>> {
        self.spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, _)| {
                match (self.params.get(&weight_name(i)), self.params.get(&bias_name(i))) {
                    (Some(w), Some(b)) => Some((w.data(), b.data())),
                    _ => None,
                }
            })
            .collect()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let (c, h, w) = self.spec.input;
        let shape = batch.shape();
        if shape.len() != 4 || shape[1] != c || shape[2] != h || shape[3] != w {
            return Err(Error::shape(format!(
                "batch shape {shape:?} does not match model input ({c}, {h}, {w})"
            )));
        }
        Ok(shape[0])
    }

    /// Forward one sample; when `trace` is given, stores every layer output.
    fn forward_sample(
        &self,
        x: &[f32],
        resolved: &[Option<(&[f32], &[f32])>],
        mut trace: Option<&mut Vec<Vec<f32>>>,
    ) -> Result<Vec<f32>> {
        let mut cur = x.to_vec();
        let mut cur_shape = LayerShape::Map {
            c: self.spec.input.0,
            h: self.spec.input.1,
            w: self.spec.input.2,
        };
        let mut scratch = Vec::new();
        for (i, desc) in self.spec.layers.iter().enumerate() {
            let out_shape = self.shapes[i];
            let mut out = vec![0.0f32; out_shape.len()];
            match (desc, cur_shape) {
                (
                    LayerDesc::Conv2d { out_channels, kernel, stride, pad },
                    LayerShape::Map { c, h, w },
                ) => {
                    let (weight, bias) = resolved[i].expect("conv layer has parameters");
                    let (oh, ow) = match out_shape {
                        LayerShape::Map { h, w, .. } => (h, w),
                        _ => unreachable!(),
                    };
                    layers::conv_forward(
                        &cur, c, h, w, weight, bias, *out_channels, *kernel, *stride, *pad, oh,
                        ow, &mut out, &mut scratch,
                    );
                }
                (LayerDesc::Relu, _) => layers::relu_forward(&cur, &mut out),
                (LayerDesc::MaxPool { k }, LayerShape::Map { c, h, w }) => {
                    layers::maxpool_forward(&cur, c, h, w, *k, &mut out);
                }
                (LayerDesc::Flatten, _) => out.copy_from_slice(&cur),
                (LayerDesc::Dense { out: co }, LayerShape::Flat(ci)) => {
                    let (weight, bias) = resolved[i].expect("dense layer has parameters");
                    layers::dense_forward(&cur, weight, bias, *co, ci, &mut out);
                }
                _ => unreachable!("shapes() validated layer compatibility"),
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric_at(i, "non-finite activation"));
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(out.clone());
            }
            cur = out;
            cur_shape = out_shape;
        }
        Ok(cur)
    }

    /// Backward one sample from logit gradients. Returns the input gradient and,
    /// when requested, parameter gradients accumulated into `param_grads`.
    fn backward_sample(
        &self,
        x: &[f32],
        trace: &[Vec<f32>],
        glogits: &[f32],
        resolved: &[Option<(&[f32], &[f32])>],
        mut param_grads: Option<&mut GradMap>,
    ) -> Vec<f32> {
        let n_layers = self.spec.layers.len();
        let mut g = glogits.to_vec();
        let mut scratch = Vec::new();
        for i in (0..n_layers).rev() {
            let in_shape = if i == 0 {
                LayerShape::Map { c: self.spec.input.0, h: self.spec.input.1, w: self.spec.input.2 }
            } else {
                self.shapes[i - 1]
            };
            let input: &[f32] = if i == 0 { x } else { &trace[i - 1] };
            let mut dx = vec![0.0f32; in_shape.len()];
            match (&self.spec.layers[i], in_shape) {
                (
                    LayerDesc::Conv2d { out_channels, kernel, stride, pad },
                    LayerShape::Map { c, h, w },
                ) => {
                    let (weight, _) = resolved[i].expect("conv layer has parameters");
                    let (oh, ow) = match self.shapes[i] {
                        LayerShape::Map { h, w, .. } => (h, w),
                        _ => unreachable!(),
                    };
                    layers::conv_backward_input(
                        &g, weight, c, h, w, *out_channels, *kernel, *stride, *pad, oh, ow,
                        &mut dx, &mut scratch,
                    );
                    if let Some(pg) = param_grads.as_deref_mut() {
                        let mut dw = std::mem::take(
                            pg.entry(weight_name(i))
                                .or_insert_with(|| vec![0.0; out_channels * c * kernel * kernel]),
                        );
                        let mut db = std::mem::take(
                            pg.entry(bias_name(i)).or_insert_with(|| vec![0.0; *out_channels]),
                        );
                        layers::conv_backward_params(
                            input, &g, c, h, w, *out_channels, *kernel, *stride, *pad, oh, ow,
                            &mut dw, &mut db,
                        );
                        *pg.get_mut(&weight_name(i)).unwrap() = dw;
                        *pg.get_mut(&bias_name(i)).unwrap() = db;
                    }
                }
                (LayerDesc::Relu, _) => {
                    layers::relu_backward(&g, &trace[i], &mut dx);
                }
                (LayerDesc::MaxPool { k }, LayerShape::Map { c, h, w }) => {
                    layers::maxpool_backward(&g, input, c, h, w, *k, &mut dx);
                }
                (LayerDesc::Flatten, _) => dx.copy_from_slice(&g),
                (LayerDesc::Dense { out: co }, LayerShape::Flat(ci)) => {
                    let (weight, _) = resolved[i].expect("dense layer has parameters");
                    layers::dense_backward_input(&g, weight, *co, ci, &mut dx);
                    if let Some(pg) = param_grads.as_deref_mut() {
                        let mut dw = std::mem::take(
                            pg.entry(weight_name(i)).or_insert_with(|| vec![0.0; co * ci]),
                        );
                        let mut db =
                            std::mem::take(pg.entry(bias_name(i)).or_insert_with(|| vec![0.0; *co]));
                        layers::dense_backward_params(input, &g, *co, ci, &mut dw, &mut db);
                        *pg.get_mut(&weight_name(i)).unwrap() = dw;
                        *pg.get_mut(&bias_name(i)).unwrap() = db;
                    }
                }
                _ => unreachable!(),
            }
            g = dx;
        }
        g
    }

    /// Logits for a batch of images, shape [B, K].
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let b = self.check_batch(batch)?;
        let resolved = self.resolve_params();
        let rows: Result<Vec<Vec<f32>>> = (0..b)
            .into_par_iter()
            .map(|s| self.forward_sample(batch.sample(s), &resolved, None))
            .collect();
        let rows = rows?;
        let mut data = Vec::with_capacity(b * self.spec.classes);
        for row in rows {
            data.extend_from_slice(&row);
        }
        Tensor::new(vec![b, self.spec.classes], data)
    }

    /// Predicted class per sample (argmax, ties to the lowest index).
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<usize>> {
        let logits = self.forward(batch)?;
        Ok((0..batch.shape()[0]).map(|s| argmax(logits.sample(s))).collect())
    }

    /// Fraction of samples classified correctly, in [0, 1].
    pub fn accuracy(&self, images: &Tensor, labels: &[usize]) -> Result<f32> {
        let b = self.check_batch(images)?;
        if labels.len() != b {
            return Err(Error::contract(format!(
                "{} labels for a batch of {b} images",
                labels.len()
            )));
        }
        let preds = self.predict(images)?;
        let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(correct as f32 / b as f32)
    }

    /// Per-sample loss and gradient of the mean loss w.r.t. the input pixels.
    /// One forward pass with activation caching, one reverse walk.
    pub fn loss_and_input_gradient(
        &self,
        batch: &Tensor,
        labels: &[usize],
        loss: LossKind,
    ) -> Result<(Vec<f64>, Tensor)> {
        let b = self.check_batch(batch)?;
        if labels.len() != b {
            return Err(Error::contract(format!(
                "{} labels for a batch of {b} images",
                labels.len()
            )));
        }
        let resolved = self.resolve_params();
        let per_sample: Result<Vec<(f64, Vec<f32>)>> = (0..b)
            .into_par_iter()
            .map(|s| {
                let x = batch.sample(s);
                let mut trace = Vec::with_capacity(self.spec.layers.len());
                let logits = self.forward_sample(x, &resolved, Some(&mut trace))?;
                let (lv, glogits) = loss_grad_row(&logits, labels[s], loss)?;
                let dx = self.backward_sample(x, &trace, &glogits, &resolved, None);
                Ok((lv, dx))
            })
            .collect();
        let per_sample = per_sample?;
        let mut losses = Vec::with_capacity(b);
        let mut data = Vec::with_capacity(batch.len());
        for (lv, dx) in per_sample {
            losses.push(lv);
            data.extend_from_slice(&dx);
        }
        let grads = Tensor::new(batch.shape().to_vec(), data)?;
        Ok((losses, grads))
    }

    /// Gradient of the chosen loss w.r.t. the input pixels, shape like `batch`.
    pub fn input_gradient(&self, batch: &Tensor, labels: &[usize], loss: LossKind) -> Result<Tensor> {
        Ok(self.loss_and_input_gradient(batch, labels, loss)?.1)
    }

    /// Outputs of the requested relu taps for one image of shape [C, H, W].
    pub fn feature_maps(&self, image: &Tensor, tap_ids: &[usize]) -> Result<Vec<Tensor>> {
        let (c, h, w) = self.spec.input;
        if image.shape() != [c, h, w] {
            return Err(Error::shape(format!(
                "feature_maps expects one image of shape [{c}, {h}, {w}], got {:?}",
                image.shape()
            )));
        }
        for &t in tap_ids {
            if t >= self.spec.layers.len() || !matches!(self.spec.layers[t], LayerDesc::Relu) {
                return Err(Error::contract(format!("tap id {t} does not index a relu layer")));
            }
        }
        let resolved = self.resolve_params();
        let mut trace = Vec::with_capacity(self.spec.layers.len());
        self.forward_sample(image.data(), &resolved, Some(&mut trace))?;
        tap_ids
            .iter()
            .map(|&t| {
                let shape = match self.shapes[t] {
                    LayerShape::Map { c, h, w } => vec![c, h, w],
                    LayerShape::Flat(n) => vec![n],
                };
                Tensor::new(shape, trace[t].clone())
            })
            .collect()
    }

    /// Serialise all parameters, ordered by layer index then weight/bias.
    pub fn save_weights(&self, path: &std::path::Path) -> Result<()> {
        let mut entries = Vec::new();
        for i in 0..self.spec.layers.len() {
            for name in [weight_name(i), bias_name(i)] {
                if let Some(t) = self.params.get(&name) {
                    entries.push((name, t.clone()));
                }
            }
        }
        crate::spdf::write_tensors(path, &entries)
    }

    /// Load weights for `spec`, verifying that the file holds exactly the
    /// expected tensor names with the expected shapes.
    pub fn load_weights(spec: &NetworkSpec, path: &std::path::Path) -> Result<TrainedModel> {
        let shapes = spec.shapes()?;
        let fresh = TrainedModel::build(spec, 0)?;
        let entries = crate::spdf::read_tensors(path)?;
        let mut params = BTreeMap::new();
        for (name, tensor) in entries {
            match fresh.params.get(&name) {
                Some(expected) if expected.shape() == tensor.shape() => {
                    params.insert(name, tensor);
                }
                Some(expected) => {
                    return Err(Error::format(format!(
                        "tensor {name} has shape {:?}, expected {:?}",
                        tensor.shape(),
                        expected.shape()
                    )));
                }
                None => return Err(Error::format(format!("unexpected tensor {name} in weights file"))),
            }
        }
        if params.len() != fresh.params.len() {
            let missing: Vec<&String> =
                fresh.params.keys().filter(|k| !params.contains_key(*k)).collect();
            return Err(Error::format(format!("weights file is missing tensors {missing:?}")));
        }
        let tap_ids = spec.relu_layers();
        Ok(TrainedModel { spec: spec.clone(), shapes, params, tap_ids })
    }

    /// Replace a parameter tensor (shape-checked).
    pub fn set_param(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        match self.params.get(name) {
            Some(existing) if existing.shape() == tensor.shape() => {
                self.params.insert(name.to_string(), tensor);
                Ok(())
            }
            Some(existing) => Err(Error::shape(format!(
                "parameter {name}: shape {:?} incompatible with {:?}",
                tensor.shape(),
                existing.shape()
            ))),
            None => Err(Error::contract(format!("unknown parameter {name}"))),
        }
    }
}

/// Loss value and gradient w.r.t. one logit row.
fn loss_grad_row(logits: &[f32], label: usize, loss: LossKind) -> Result<(f64, Vec<f32>)> {
    match loss {
        LossKind::CrossEntropy => loss::cross_entropy(logits, label),
        LossKind::Dlr => loss::dlr_with_grad(logits, label),
        LossKind::MarginHinge => Ok(loss::margin_hinge(logits, label)),
    }
}

/// Anything that can classify image batches and expose input-space gradients.
///
/// The two required gradient entry points are enough for every attack here;
/// the provided methods have default implementations in terms of them, and
/// `TrainedModel` overrides them with fused single-trace versions.
pub trait Classifier: Sync {
    fn num_classes(&self) -> usize;
    /// Input shape as (channels, height, width).
    fn input_dims(&self) -> (usize, usize, usize);
    /// Logits for a batch [B, C, H, W] -> [B, K].
    fn forward_batch(&self, batch: &Tensor) -> Result<Tensor>;
    /// Pull logit-space gradients [B, K] back to input space [B, C, H, W].
    fn input_grads(&self, batch: &Tensor, logit_grads: &Tensor) -> Result<Tensor>;

    /// Per-sample loss plus gradient w.r.t. inputs, in one call.
    fn loss_and_input_grad(
        &self,
        batch: &Tensor,
        labels: &[usize],
        loss: LossKind,
    ) -> Result<(Vec<f64>, Tensor)> {
        let logits = self.forward_batch(batch)?;
        let b = batch.shape()[0];
        let k = self.num_classes();
        let mut losses = Vec::with_capacity(b);
        let mut grows = Vec::with_capacity(b * k);
        for s in 0..b {
            let (lv, g) = loss_grad_row(logits.sample(s), labels[s], loss)?;
            losses.push(lv);
            grows.extend_from_slice(&g);
        }
        let glogits = Tensor::new(vec![b, k], grows)?;
        let grads = self.input_grads(batch, &glogits)?;
        Ok((losses, grads))
    }

    /// Like `loss_and_input_grad`, but a per-sample loss failure (e.g. a
    /// degenerate DLR denominator) yields `None` for that sample with a zero
    /// gradient row instead of failing the whole batch. Structural errors
    /// (shape mismatches, non-finite activations) still fail the call.
    fn loss_and_input_grad_tolerant(
        &self,
        batch: &Tensor,
        labels: &[usize],
        loss: LossKind,
    ) -> Result<(Vec<Option<f64>>, Tensor)> {
        let logits = self.forward_batch(batch)?;
        let b = batch.shape()[0];
        let k = self.num_classes();
        let mut losses = Vec::with_capacity(b);
        let mut grows = vec![0.0f32; b * k];
        for s in 0..b {
            match loss_grad_row(logits.sample(s), labels[s], loss) {
                Ok((lv, g)) => {
                    losses.push(Some(lv));
                    grows[s * k..(s + 1) * k].copy_from_slice(&g);
                }
                Err(_) => losses.push(None),
            }
        }
        let glogits = Tensor::new(vec![b, k], grows)?;
        let grads = self.input_grads(batch, &glogits)?;
        Ok((losses, grads))
    }

    /// Logits plus, per class, the gradient of that logit w.r.t. the inputs.
    /// Returns (logits [B, K], per-class grads; entry k has shape [B, C, H, W]).
    fn input_jacobian(&self, batch: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let logits = self.forward_batch(batch)?;
        let b = batch.shape()[0];
        let k = self.num_classes();
        let mut per_class = Vec::with_capacity(k);
        for class in 0..k {
            let mut rows = vec![0.0f32; b * k];
            for s in 0..b {
                rows[s * k + class] = 1.0;
            }
            let glogits = Tensor::new(vec![b, k], rows)?;
            per_class.push(self.input_grads(batch, &glogits)?);
        }
        Ok((logits, per_class))
    }
}

impl Classifier for TrainedModel {
    fn num_classes(&self) -> usize {
        self.spec.classes
    }

    fn input_dims(&self) -> (usize, usize, usize) {
        self.spec.input
    }

    fn forward_batch(&self, batch: &Tensor) -> Result<Tensor> {
        self.forward(batch)
    }

    fn input_grads(&self, batch: &Tensor, logit_grads: &Tensor) -> Result<Tensor> {
        let b = self.check_batch(batch)?;
        if logit_grads.shape() != [b, self.spec.classes] {
            return Err(Error::shape(format!(
                "logit grads shape {:?} does not match [{b}, {}]",
                logit_grads.shape(),
                self.spec.classes
            )));
        }
        let resolved = self.resolve_params();
        let rows: Result<Vec<Vec<f32>>> = (0..b)
            .into_par_iter()
            .map(|s| {
                let x = batch.sample(s);
                let mut trace = Vec::with_capacity(self.spec.layers.len());
                self.forward_sample(x, &resolved, Some(&mut trace))?;
                Ok(self.backward_sample(x, &trace, logit_grads.sample(s), &resolved, None))
            })
            .collect();
        let rows = rows?;
        let mut data = Vec::with_capacity(batch.len());
        for row in rows {
            data.extend_from_slice(&row);
        }
        Tensor::new(batch.shape().to_vec(), data)
    }

    fn loss_and_input_grad(
        &self,
        batch: &Tensor,
        labels: &[usize],
        loss: LossKind,
    ) -> Result<(Vec<f64>, Tensor)> {
        self.loss_and_input_gradient(batch, labels, loss)
    }

    fn loss_and_input_grad_tolerant(
        &self,
        batch: &Tensor,
        labels: &[usize],
        loss: LossKind,
    ) -> Result<(Vec<Option<f64>>, Tensor)> {
        let b = self.check_batch(batch)?;
        if labels.len() != b {
            return Err(Error::contract(format!(
                "{} labels for a batch of {b} images",
                labels.len()
            )));
        }
        let resolved = self.resolve_params();
        let sample_len = batch.sample_len();
        let per_sample: Result<Vec<(Option<f64>, Vec<f32>)>> = (0..b)
            .into_par_iter()
            .map(|s| {
                let x = batch.sample(s);
                let mut trace = Vec::with_capacity(self.spec.layers.len());
                let logits = self.forward_sample(x, &resolved, Some(&mut trace))?;
                match loss_grad_row(&logits, labels[s], loss) {
                    Ok((lv, glogits)) => {
                        let dx = self.backward_sample(x, &trace, &glogits, &resolved, None);
                        Ok((Some(lv), dx))
                    }
                    Err(_) => Ok((None, vec![0.0f32; sample_len])),
                }
            })
            .collect();
        let per_sample = per_sample?;
        let mut losses = Vec::with_capacity(b);
        let mut data = Vec::with_capacity(batch.len());
        for (lv, dx) in per_sample {
            losses.push(lv);
            data.extend_from_slice(&dx);
        }
        Ok((losses, Tensor::new(batch.shape().to_vec(), data)?))
    }

    fn input_jacobian(&self, batch: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let b = self.check_batch(batch)?;
        let k = self.spec.classes;
        let resolved = self.resolve_params();
        // One forward trace per sample, then K reverse walks over it.
        let per_sample: Result<Vec<(Vec<f32>, Vec<Vec<f32>>)>> = (0..b)
            .into_par_iter()
            .map(|s| {
                let x = batch.sample(s);
                let mut trace = Vec::with_capacity(self.spec.layers.len());
                let logits = self.forward_sample(x, &resolved, Some(&mut trace))?;
                let mut grads = Vec::with_capacity(k);
                for class in 0..k {
                    let mut glogits = vec![0.0f32; k];
                    glogits[class] = 1.0;
                    grads.push(self.backward_sample(x, &trace, &glogits, &resolved, None));
                }
                Ok((logits, grads))
            })
            .collect();
        let per_sample = per_sample?;
        let mut logit_data = Vec::with_capacity(b * k);
        for (logits, _) in &per_sample {
            logit_data.extend_from_slice(logits);
        }
        let logits = Tensor::new(vec![b, k], logit_data)?;
        let sample_len = batch.sample_len();
        let mut per_class = Vec::with_capacity(k);
        for class in 0..k {
            let mut data = Vec::with_capacity(b * sample_len);
            for (_, grads) in &per_sample {
                data.extend_from_slice(&grads[class]);
            }
            per_class.push(Tensor::new(batch.shape().to_vec(), data)?);
        }
        Ok((logits, per_class))
    }
}
