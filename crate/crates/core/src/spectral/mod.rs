//! Fourier-magnitude adversarial-example detection.
//!
//! Feature extraction concatenates per-channel DFT magnitude grids — of the
//! input image alone (black box) or of the image plus tapped network feature
//! maps (white box). Two from-scratch classifiers learn to separate clean
//! from adversarial spectra: L2-regularized logistic regression and a random
//! forest over gini-split CART trees.

mod detector;
mod dft;
mod features;
mod forest;
mod logreg;

pub use detector::{
    evaluate_detector, score_from_confusion, train_detector, DetectionScore, DetectorHyper,
    DetectorKind, DetectorModel, DetectorParams, ForestHyper, LogregHyper,
};
pub use dft::{dft2d, magnitude, Coeff};
pub use features::{extract_bb, extract_wb, pair_features, Normalization};
pub use forest::{Tree, TreeNode};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tensor::Tensor;

/// Where a feature vector came from: input-image spectra only, or image
/// spectra extended with the spectra of tapped feature maps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Bb,
    Wb { tap_ids: Vec<usize> },
}

impl FeatureSource {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureSource::Bb => "bb",
            FeatureSource::Wb { .. } => "wb",
        }
    }
}

/// A labelled feature matrix: row-major `n_samples` × `n_features`,
/// label 0 = clean, 1 = adversarial. Built in clean/adversarial pairs, so
/// the classes stay balanced by construction.
#[derive(Debug, Clone)]
pub struct SpectralFeatureSet {
    features: Vec<f32>,
    n_features: usize,
    labels: Vec<u8>,
    pub source: FeatureSource,
    pub normalization: Option<Normalization>,
}

#[derive(Serialize, Deserialize)]
struct FeatureManifest {
    labels: Vec<u8>,
    source: FeatureSource,
    normalization: Option<Normalization>,
}

impl SpectralFeatureSet {
    pub fn new(
        features: Vec<f32>,
        n_features: usize,
        labels: Vec<u8>,
        source: FeatureSource,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::contract("feature vectors must be non-empty"));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::shape(format!(
                "{} labels × {n_features} features need {} values, got {}",
                labels.len(),
                labels.len() * n_features,
                features.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::contract("labels must be 0 (clean) or 1 (adversarial)"));
        }
        if features.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::numeric(
                "raw spectral features must be finite and non-negative",
            ));
        }
        Ok(Self { features, n_features, labels, source, normalization: None })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    /// New set holding the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(rows.len() * self.n_features);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.len() {
                return Err(Error::contract(format!("row {r} out of range {}", self.len())));
            }
            features.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        Ok(Self {
            features,
            n_features: self.n_features,
            labels,
            source: self.source.clone(),
            normalization: self.normalization.clone(),
        })
    }

    /// Persist as `{stem}.spdf` (feature matrix) + `{stem}.json` (labels,
    /// source, normalization).
    pub fn save(&self, stem: &std::path::Path) -> Result<()> {
        let matrix = Tensor::new(vec![self.len(), self.n_features], self.features.clone())?;
        crate::spdf::write_tensors(
            &stem.with_extension("spdf"),
            &[("features".to_string(), matrix)],
        )?;
        let manifest = FeatureManifest {
            labels: self.labels.clone(),
            source: self.source.clone(),
            normalization: self.normalization.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::format(format!("encoding feature manifest: {e}")))?;
        std::fs::write(stem.with_extension("json"), text)?;
        Ok(())
    }

    pub fn load(stem: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(stem.with_extension("json"))?;
        let manifest: FeatureManifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("decoding feature manifest: {e}")))?;
        let tensors = crate::spdf::read_tensors(&stem.with_extension("spdf"))?;
        let matrix = tensors
            .into_iter()
            .find(|(name, _)| name == "features")
            .map(|(_, tensor)| tensor)
            .ok_or_else(|| Error::format("feature file is missing the 'features' tensor"))?;
        if matrix.rank() != 2 || matrix.shape()[0] != manifest.labels.len() {
            return Err(Error::shape(format!(
                "feature matrix {:?} does not match {} labels",
                matrix.shape(),
                manifest.labels.len()
            )));
        }
        let n_features = matrix.shape()[1];
        let mut set = Self::new(matrix.into_data(), n_features, manifest.labels, manifest.source)?;
        set.normalization = manifest.normalization;
        Ok(set)
    }
}

/// Index split preserving the class ratio: within each class, rows are
/// shuffled by a (seed, class)-keyed stream and the first rounded
/// `test_fraction` share becomes the test set (at least 1 and at most n−1
/// when the class has ≥ 2 rows; singleton classes stay in the training set).
/// Both halves are returned in ascending row order.
pub fn stratified_split(
    labels: &[u8],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
        return Err(Error::config(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    if labels.is_empty() {
        return Err(Error::contract("cannot split an empty set"));
    }
    let mut classes: Vec<u8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in classes {
        let mut idx: Vec<usize> =
            (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let mut rng = stream_rng(seed, 0x3000_0000 + class as u64);
        // Fisher-Yates, matching the trainer's shuffle idiom
        for i in (1..idx.len()).rev() {
            let j = rand::Rng::gen_range(&mut rng, 0..=i);
            idx.swap(i, j);
        }
        let n = idx.len();
        let n_test = if n < 2 {
            0
        } else {
            ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1)
        };
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
