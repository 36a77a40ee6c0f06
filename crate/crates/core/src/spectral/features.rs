//! Feature extraction: per-channel DFT magnitude grids, the paired
//! clean/adversarial set builder, and per-feature z-score normalization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::AdversarialBatch;
use crate::error::{Error, Result};
use crate::model::TrainedModel;
use crate::tensor::Tensor;

use super::dft::{dft2d, magnitude};
use super::{FeatureSource, SpectralFeatureSet};

/// Concatenated per-channel magnitude grids of one image; length C·H·W.
pub fn extract_bb(image: &Tensor) -> Result<Vec<f32>> {
    let (c, h, w) = image_dims(image)?;
    if h != w {
        return Err(Error::contract(format!(
            "input spectra need square images, got {h}×{w}"
        )));
    }
    let mut out = Vec::with_capacity(c * h * w);
    append_channel_spectra(&mut out, image.data(), c, h, w)?;
    Ok(out)
}

/// Black-box features of the input followed by the magnitude spectra of all
/// channels of each tapped feature map, in tap order. With no taps this is
/// exactly `extract_bb`.
pub fn extract_wb(model: &TrainedModel, image: &Tensor, tap_ids: &[usize]) -> Result<Vec<f32>> {
    let mut out = extract_bb(image)?;
    if tap_ids.is_empty() {
        return Ok(out);
    }
    for map in model.feature_maps(image, tap_ids)? {
        let (c, h, w) = image_dims(&map)?;
        if h != w {
            return Err(Error::contract(format!(
                "tapped feature maps must be square per channel, got {h}×{w}"
            )));
        }
        out.reserve(c * h * w);
        append_channel_spectra(&mut out, map.data(), c, h, w)?;
    }
    Ok(out)
}

fn image_dims(t: &Tensor) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [c, h, w] => Ok((*c, *h, *w)),
        other => Err(Error::shape(format!("expected a [C, H, W] tensor, got {other:?}"))),
    }
}

fn append_channel_spectra(
    out: &mut Vec<f32>,
    data: &[f32],
    c: usize,
    h: usize,
    w: usize,
) -> Result<()> {
    let plane_len = h * w;
    let mut plane = vec![0.0f64; plane_len];
    for ch in 0..c {
        for (dst, src) in plane.iter_mut().zip(&data[ch * plane_len..(ch + 1) * plane_len]) {
            *dst = *src as f64;
        }
        let coeffs = dft2d(&plane, h, w)?;
        out.extend(magnitude(&coeffs).iter().map(|&v| v as f32));
    }
    Ok(())
}

/// Build the balanced detection set from an attack batch: every successful
/// adversarial sample contributes its feature row (label 1) immediately
/// preceded by its clean counterpart's row (label 0). Failed samples are
/// skipped entirely. White-box sources need the attacked model for its
/// feature maps.
pub fn pair_features(
    batch: &AdversarialBatch,
    source: &FeatureSource,
    model: Option<&TrainedModel>,
) -> Result<SpectralFeatureSet> {
    let shape = batch.clean.shape();
    let (c, h, w) = match shape {
        [_, c, h, w] => (*c, *h, *w),
        other => {
            return Err(Error::shape(format!("expected a [N, C, H, W] batch, got {other:?}")))
        }
    };
    if matches!(source, FeatureSource::Wb { .. }) && model.is_none() {
        return Err(Error::contract(
            "white-box features need the attacked model's feature maps",
        ));
    }
    let winners: Vec<usize> = (0..batch.len()).filter(|&s| batch.success[s]).collect();
    let extract = |data: &[f32]| -> Result<Vec<f32>> {
        let img = Tensor::new(vec![c, h, w], data.to_vec())?;
        match source {
            FeatureSource::Bb => extract_bb(&img),
            FeatureSource::Wb { tap_ids } => extract_wb(model.unwrap(), &img, tap_ids),
        }
    };
    let rows: Vec<(Vec<f32>, Vec<f32>)> = winners
        .par_iter()
        .map(|&s| Ok((extract(batch.clean.sample(s))?, extract(batch.adversarial.sample(s))?)))
        .collect::<Result<_>>()?;
    let n_features = rows.first().map_or(c * h * w, |(r, _)| r.len());
    let mut features = Vec::with_capacity(rows.len() * 2 * n_features);
    let mut labels = Vec::with_capacity(rows.len() * 2);
    for (clean_row, adv_row) in rows {
        features.extend_from_slice(&clean_row);
        labels.push(0);
        features.extend_from_slice(&adv_row);
        labels.push(1);
    }
    SpectralFeatureSet::new(features, n_features, labels, source.clone())
}

/// Per-feature z-score parameters. Fit on training rows only; features with
/// (near-)zero spread keep a unit divisor so they map to 0 instead of NaN.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn fit(set: &SpectralFeatureSet) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::contract("cannot fit normalization on an empty set"));
        }
        let d = set.n_features();
        let n = set.len() as f64;
        let mut mean = vec![0.0f64; d];
        for i in 0..set.len() {
            for (m, v) in mean.iter_mut().zip(set.row(i)) {
                *m += *v as f64;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0f64; d];
        for i in 0..set.len() {
            for j in 0..d {
                let dlt = set.row(i)[j] as f64 - mean[j];
                var[j] += dlt * dlt;
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s < 1e-12 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, row: &[f32]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (m, s))| (v as f64 - m) / s)
            .collect()
    }

    pub fn invert(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (m, s))| v * s + m)
            .collect()
    }
}
