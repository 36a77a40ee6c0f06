//! Minibatch SGD with momentum.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tensor::Tensor;

use super::loss::cross_entropy;
use super::{GradMap, TrainedModel};

/// Samples per parallel gradient chunk. Fixed so that the reduction order —
/// and therefore the trained weights — do not depend on the worker count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub momentum: f32,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper { epochs: 30, batch_size: 32, lr: 0.05, momentum: 0.9, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Mean cross-entropy over the training set, one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainedModel {
    /// Train in place with cross-entropy SGD. Shuffling, initialisation and
    /// gradient reduction are all seed-deterministic; rerunning with the same
    /// model, data and hyperparameters reproduces the same weights.
    pub fn fit(&mut self, images: &Tensor, labels: &[usize], hyper: &TrainHyper) -> Result<TrainResult> {
        if !(hyper.lr.is_finite() && hyper.lr > 0.0) {
            return Err(Error::config(format!("learning rate must be positive, got {}", hyper.lr)));
        }
        if !(0.0..1.0).contains(&hyper.momentum) {
            return Err(Error::config(format!(
                "momentum must lie in [0, 1), got {}",
                hyper.momentum
            )));
        }
        if hyper.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if hyper.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        let n = self.check_batch(images)?;
        if labels.len() != n {
            return Err(Error::contract(format!("{} labels for {n} images", labels.len())));
        }
        if n == 0 {
            return Err(Error::contract("cannot train on an empty dataset"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.spec().classes) {
            return Err(Error::contract(format!(
                "label {bad} out of range for {} classes",
                self.spec().classes
            )));
        }

        let mut velocity: BTreeMap<String, Vec<f32>> = self
            .params()
            .iter()
            .map(|(name, t)| (name.clone(), vec![0.0f32; t.len()]))
            .collect();

        let mut epoch_losses = Vec::with_capacity(hyper.epochs);
        let mut order: Vec<usize> = (0..n).collect();
        for epoch in 0..hyper.epochs {
            shuffle(&mut order, hyper.seed, epoch as u64);
            let mut loss_sum = 0.0f64;
            for mb in order.chunks(hyper.batch_size) {
                let (batch_loss, grads) = self.minibatch_gradients(images, labels, mb)?;
                loss_sum += batch_loss;
                self.apply_update(&grads, mb.len(), hyper, &mut velocity);
            }
            epoch_losses.push(loss_sum / n as f64);
        }
        Ok(TrainResult { epoch_losses })
    }

    /// Summed loss and summed parameter gradients over the index set `mb`.
    fn minibatch_gradients(
        &self,
        images: &Tensor,
        labels: &[usize],
        mb: &[usize],
    ) -> Result<(f64, GradMap)> {
        let resolved = self.resolve_params();
        let chunk_results: Result<Vec<(f64, GradMap)>> = mb
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut grads = GradMap::new();
                let mut loss = 0.0f64;
                for &s in chunk {
                    let x = images.sample(s);
                    let mut trace = Vec::with_capacity(self.spec().layers.len());
                    let logits = self.forward_sample(x, &resolved, Some(&mut trace))?;
                    let (lv, glogits) = cross_entropy(&logits, labels[s])?;
                    loss += lv;
                    self.backward_sample(x, &trace, &glogits, &resolved, Some(&mut grads));
                }
                Ok((loss, grads))
            })
            .collect();
        // Merge chunk accumulators in chunk order: identical for any thread count.
        let mut total = GradMap::new();
        let mut loss = 0.0f64;
        for (chunk_loss, chunk_grads) in chunk_results? {
            loss += chunk_loss;
            for (name, g) in chunk_grads {
                match total.get_mut(&name) {
                    Some(acc) => {
                        for (a, v) in acc.iter_mut().zip(&g) {
                            *a += v;
                        }
                    }
                    None => {
                        total.insert(name, g);
                    }
                }
            }
        }
        Ok((loss, total))
    }

    /// v = momentum * v + mean_grad; theta -= lr * v.
    fn apply_update(
        &mut self,
        grads: &GradMap,
        batch_len: usize,
        hyper: &TrainHyper,
        velocity: &mut BTreeMap<String, Vec<f32>>,
    ) {
        let scale = 1.0 / batch_len as f64;
        for (name, g) in grads {
            let v = velocity.get_mut(name).expect("velocity tracks every parameter");
            let t = self.params.get_mut(name).expect("gradient names come from parameters");
            let data = t.data_mut();
            for i in 0..data.len() {
                let mean_g = (g[i] * scale) as f32;
                v[i] = hyper.momentum * v[i] + mean_g;
                data[i] -= hyper.lr * v[i];
            }
        }
    }
}

/// Fisher-Yates driven by the per-epoch seed stream.
fn shuffle(order: &mut [usize], seed: u64, epoch: u64) {
    use rand::Rng;
    let mut rng = stream_rng(seed, 0x1000_0000 + epoch);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}
