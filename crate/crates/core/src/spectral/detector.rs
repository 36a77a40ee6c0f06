//! Detector training, scoring, and persistence.
//!
//! Both classifier kinds share one wrapper: the z-score normalization fitted
//! on the training set travels with the learned parameters, prediction
//! applies it before the kind-specific rule, and a hard 0.5 threshold turns
//! probabilities into clean/adversarial calls (ties count as adversarial).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::features::Normalization;
use super::forest::{train_forest, Tree, TreeNode};
use super::logreg::{sigmoid, train_logreg};
use super::SpectralFeatureSet;

pub use super::forest::ForestHyper;
pub use super::logreg::LogregHyper;

const FOREST_MAGIC: &[u8; 8] = b"ASRDRF01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Logreg,
    RandomForest,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 2] = [DetectorKind::Logreg, DetectorKind::RandomForest];

    /// Short column name used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Logreg => "lr",
            DetectorKind::RandomForest => "rf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lr" | "logreg" | "logistic_regression" => Ok(DetectorKind::Logreg),
            "rf" | "forest" | "random_forest" => Ok(DetectorKind::RandomForest),
            other => Err(Error::config(format!(
                "unknown detector '{other}'; valid: lr, rf"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DetectorHyper {
    pub logreg: LogregHyper,
    pub forest: ForestHyper,
}

#[derive(Debug, Clone)]
pub enum DetectorParams {
    Logreg { weights: Vec<f64>, bias: f64 },
    Forest { trees: Vec<Tree> },
}

#[derive(Debug, Clone)]
pub struct DetectorModel {
    pub kind: DetectorKind,
    pub seed: u64,
    pub normalization: Normalization,
    pub params: DetectorParams,
}

/// Confusion counts and the derived rates; "positive" means adversarial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
    pub f1: f64,
    pub fnr: f64,
    pub fpr: f64,
}

pub fn score_from_confusion(
    true_pos: usize,
    false_pos: usize,
    true_neg: usize,
    false_neg: usize,
) -> DetectionScore {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    DetectionScore {
        true_pos,
        false_pos,
        true_neg,
        false_neg,
        f1: ratio(2 * true_pos, 2 * true_pos + false_pos + false_neg),
        fnr: ratio(false_neg, false_neg + true_pos),
        fpr: ratio(false_pos, false_pos + true_neg),
    }
}

/// Fit the chosen classifier on the (already extracted) feature set. The
/// normalization is fitted here, on exactly these rows, and stored in the
/// model. Logistic regression is deterministic from a zero start; the seed
/// only drives the forest's bootstrap and feature subsampling.
pub fn train_detector(
    set: &SpectralFeatureSet,
    kind: DetectorKind,
    hyper: &DetectorHyper,
    seed: u64,
) -> Result<DetectorModel> {
    if set.is_empty() {
        return Err(Error::contract("cannot train a detector on an empty set"));
    }
    let has = [
        set.labels().iter().any(|&l| l == 0),
        set.labels().iter().any(|&l| l == 1),
    ];
    if !(has[0] && has[1]) {
        return Err(Error::contract(
            "detector training needs both clean and adversarial rows",
        ));
    }
    let normalization = Normalization::fit(set)?;
    let (n, d) = (set.len(), set.n_features());
    let mut x = Vec::with_capacity(n * d);
    for i in 0..n {
        x.extend_from_slice(&normalization.apply(set.row(i)));
    }
    let params = match kind {
        DetectorKind::Logreg => {
            let (weights, bias) = train_logreg(&x, n, d, set.labels(), &hyper.logreg);
            DetectorParams::Logreg { weights, bias }
        }
        DetectorKind::RandomForest => DetectorParams::Forest {
            trees: train_forest(&x, n, d, set.labels(), &hyper.forest, seed)?,
        },
    };
    Ok(DetectorModel { kind, seed, normalization, params })
}

impl DetectorModel {
    pub fn n_features(&self) -> usize {
        self.normalization.mean.len()
    }

    /// Probability that the row is adversarial.
    pub fn predict_proba(&self, row: &[f32]) -> Result<f64> {
        if row.len() != self.n_features() {
            return Err(Error::shape(format!(
                "detector expects {} features, got {}",
                self.n_features(),
                row.len()
            )));
        }
        let z = self.normalization.apply(row);
        Ok(match &self.params {
            DetectorParams::Logreg { weights, bias } => {
                sigmoid(weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>() + bias)
            }
            DetectorParams::Forest { trees } => {
                trees.iter().map(|t| t.proba(&z)).sum::<f64>() / trees.len() as f64
            }
        })
    }

    /// Hard call at the 0.5 threshold: 1 = adversarial.
    pub fn predict(&self, row: &[f32]) -> Result<u8> {
        Ok((self.predict_proba(row)? >= 0.5) as u8)
    }

    /// Logistic models persist as JSON, forests as a flat little-endian node
    /// array (see `FOREST_MAGIC` framing in this file).
    pub fn save(&self, path: &Path) -> Result<()> {
        match &self.params {
            DetectorParams::Logreg { weights, bias } => {
                let file = LogregFile {
                    kind: self.kind,
                    seed: self.seed,
                    normalization: self.normalization.clone(),
                    weights: weights.clone(),
                    bias: *bias,
                };
                let text = serde_json::to_string_pretty(&file)
                    .map_err(|e| Error::format(format!("encoding detector: {e}")))?;
                std::fs::write(path, text)?;
            }
            DetectorParams::Forest { trees } => {
                std::fs::write(path, encode_forest(self, trees))?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(FOREST_MAGIC) {
            return decode_forest(&bytes);
        }
        let file: LogregFile = serde_json::from_slice(&bytes)
            .map_err(|e| Error::format(format!("decoding detector: {e}")))?;
        if file.kind != DetectorKind::Logreg {
            return Err(Error::format("JSON detector files must hold a logreg model"));
        }
        if file.weights.len() != file.normalization.mean.len()
            || file.normalization.mean.len() != file.normalization.std.len()
        {
            return Err(Error::format("detector weight/normalization lengths disagree"));
        }
        Ok(DetectorModel {
            kind: file.kind,
            seed: file.seed,
            normalization: file.normalization,
            params: DetectorParams::Logreg { weights: file.weights, bias: file.bias },
        })
    }
}

#[derive(Serialize, Deserialize)]
struct LogregFile {
    kind: DetectorKind,
    seed: u64,
    normalization: Normalization,
    weights: Vec<f64>,
    bias: f64,
}

/// Score hard predictions against the set's labels.
pub fn evaluate_detector(model: &DetectorModel, test: &SpectralFeatureSet) -> Result<DetectionScore> {
    if test.is_empty() {
        return Err(Error::contract("cannot evaluate on an empty set"));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..test.len() {
        let pred = model.predict(test.row(i))?;
        match (test.labels()[i], pred) {
            (1, 1) => tp += 1,
            (1, 0) => fn_ += 1,
            (0, 1) => fp += 1,
            (0, 0) => tn += 1,
            _ => unreachable!("labels are validated to 0/1"),
        }
    }
    Ok(score_from_confusion(tp, fp, tn, fn_))
}

fn encode_forest(model: &DetectorModel, trees: &[Tree]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(FOREST_MAGIC);
    out.extend_from_slice(&(trees.len() as u32).to_le_bytes());
    out.extend_from_slice(&(model.n_features() as u32).to_le_bytes());
    out.extend_from_slice(&model.seed.to_le_bytes());
    for m in &model.normalization.mean {
        out.extend_from_slice(&m.to_le_bytes());
    }
    for s in &model.normalization.std {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for tree in trees {
        out.extend_from_slice(&(tree.nodes.len() as u32).to_le_bytes());
        for n in &tree.nodes {
            out.extend_from_slice(&n.feature.to_le_bytes());
            out.extend_from_slice(&n.left.to_le_bytes());
            out.extend_from_slice(&n.right.to_le_bytes());
            out.extend_from_slice(&n.threshold.to_le_bytes());
            out.extend_from_slice(&n.w0.to_le_bytes());
            out.extend_from_slice(&n.w1.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| Error::format("forest file is truncated"))?;
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode_forest(bytes: &[u8]) -> Result<DetectorModel> {
    let mut c = Cursor { bytes, at: FOREST_MAGIC.len() };
    let n_trees = c.u32()? as usize;
    let n_features = c.u32()? as usize;
    let seed = c.u64()?;
    let mut mean = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        mean.push(c.f64()?);
    }
    let mut std = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        std.push(c.f64()?);
    }
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let n_nodes = c.u32()? as usize;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let feature = c.u32()?;
            let left = c.u32()?;
            let right = c.u32()?;
            let threshold = c.f64()?;
            let w0 = c.f64()?;
            let w1 = c.f64()?;
            nodes.push(TreeNode { feature, threshold, left, right, w0, w1 });
        }
        let tree = Tree { nodes };
        tree.validate(n_features)?;
        trees.push(tree);
    }
    if c.at != bytes.len() {
        return Err(Error::format("forest file has trailing bytes"));
    }
    Ok(DetectorModel {
        kind: DetectorKind::RandomForest,
        seed,
        normalization: Normalization { mean, std },
        params: DetectorParams::Forest { trees },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::FeatureSource;

    fn identity_logreg(weights: Vec<f64>, bias: f64) -> DetectorModel {
        let d = weights.len();
        DetectorModel {
            kind: DetectorKind::Logreg,
            seed: 0,
            normalization: Normalization { mean: vec![0.0; d], std: vec![1.0; d] },
            params: DetectorParams::Logreg { weights, bias },
        }
    }

    fn toy_set() -> SpectralFeatureSet {
        // interleaved pairs, clearly separated along feature 0
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..12 {
            let j = i as f32 * 0.01;
            features.extend_from_slice(&[0.2 + j, 1.0 - j]);
            labels.push(0);
            features.extend_from_slice(&[0.8 - j, 1.0 + j]);
            labels.push(1);
        }
        SpectralFeatureSet::new(features, 2, labels, FeatureSource::Bb).unwrap()
    }

    #[test]
    fn confusion_arithmetic_matches_hand_computation() {
        let s = score_from_confusion(2, 1, 3, 1);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.fnr - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.fpr - 0.25).abs() < 1e-12);
        assert_eq!(
            s.true_pos + s.false_pos + s.true_neg + s.false_neg,
            7,
            "counts must sum to the test-set size"
        );
        // recall + fnr = 1 exactly
        let recall = s.true_pos as f64 / (s.true_pos + s.false_neg) as f64;
        assert_eq!(recall + s.fnr, 1.0);
    }

    #[test]
    fn hand_built_model_reproduces_the_confusion_example() {
        // w=1, b=-0.5 with identity normalization calls a row adversarial
        // exactly when its single feature is >= 0.5
        let model = identity_logreg(vec![1.0], -0.5);
        let set = SpectralFeatureSet::new(
            vec![1.0, 1.0, 0.2, 1.0, 0.2, 0.2, 0.2],
            1,
            vec![1, 1, 1, 0, 0, 0, 0],
            FeatureSource::Bb,
        )
        .unwrap();
        let s = evaluate_detector(&model, &set).unwrap();
        assert_eq!(
            (s.true_pos, s.false_pos, s.true_neg, s.false_neg),
            (2, 1, 3, 1)
        );
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.fnr - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.fpr - 0.25).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_blind_predictors_hit_the_boundary_scores() {
        let set = toy_set();
        let hyper = DetectorHyper::default();
        let model = train_detector(&set, DetectorKind::Logreg, &hyper, 0).unwrap();
        let s = evaluate_detector(&model, &set).unwrap();
        assert_eq!(s.f1, 1.0, "separable training set must be learned perfectly");
        assert_eq!(s.fnr, 0.0);
        // a detector that calls everything clean
        let blind = identity_logreg(vec![0.0, 0.0], -10.0);
        let s = evaluate_detector(&blind, &set).unwrap();
        assert_eq!(s.fnr, 1.0);
        assert_eq!(s.f1, 0.0);
    }

    #[test]
    fn forest_detector_learns_the_toy_set() {
        let set = toy_set();
        let hyper = DetectorHyper {
            forest: ForestHyper { n_trees: 25, ..ForestHyper::default() },
            ..DetectorHyper::default()
        };
        let model = train_detector(&set, DetectorKind::RandomForest, &hyper, 7).unwrap();
        let s = evaluate_detector(&model, &set).unwrap();
        assert!(s.f1 > 0.9, "forest should separate the clusters, f1={}", s.f1);
    }

    #[test]
    fn single_class_sets_are_rejected() {
        let set = SpectralFeatureSet::new(
            vec![0.1, 0.2, 0.3, 0.4],
            2,
            vec![0, 0],
            FeatureSource::Bb,
        )
        .unwrap();
        assert!(matches!(
            train_detector(&set, DetectorKind::Logreg, &DetectorHyper::default(), 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn empty_evaluation_is_rejected() {
        let model = identity_logreg(vec![1.0], 0.0);
        let empty =
            SpectralFeatureSet::new(Vec::new(), 1, Vec::new(), FeatureSource::Bb).unwrap();
        assert!(matches!(evaluate_detector(&model, &empty), Err(Error::Contract(_))));
    }

    #[test]
    fn logreg_persistence_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let set = toy_set();
        let model =
            train_detector(&set, DetectorKind::Logreg, &DetectorHyper::default(), 3).unwrap();
        let path = dir.path().join("det.json");
        model.save(&path).unwrap();
        let back = DetectorModel::load(&path).unwrap();
        assert_eq!(back.kind, DetectorKind::Logreg);
        assert_eq!(back.seed, 3);
        let (DetectorParams::Logreg { weights: w1, bias: b1 },
             DetectorParams::Logreg { weights: w2, bias: b2 }) = (&model.params, &back.params)
        else {
            panic!("kind changed across the round trip")
        };
        assert_eq!(b1.to_bits(), b2.to_bits());
        assert!(w1.iter().zip(w2).all(|(a, b)| a.to_bits() == b.to_bits()));
        for i in 0..set.len() {
            assert_eq!(
                model.predict_proba(set.row(i)).unwrap().to_bits(),
                back.predict_proba(set.row(i)).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn forest_persistence_round_trips_and_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let set = toy_set();
        let hyper = DetectorHyper {
            forest: ForestHyper { n_trees: 5, ..ForestHyper::default() },
            ..DetectorHyper::default()
        };
        let model = train_detector(&set, DetectorKind::RandomForest, &hyper, 9).unwrap();
        let path = dir.path().join("det.rf");
        model.save(&path).unwrap();
        let back = DetectorModel::load(&path).unwrap();
        assert_eq!(back.kind, DetectorKind::RandomForest);
        let (DetectorParams::Forest { trees: t1 }, DetectorParams::Forest { trees: t2 }) =
            (&model.params, &back.params)
        else {
            panic!("kind changed across the round trip")
        };
        assert_eq!(t1, t2);
        for i in 0..set.len() {
            assert_eq!(
                model.predict_proba(set.row(i)).unwrap().to_bits(),
                back.predict_proba(set.row(i)).unwrap().to_bits()
            );
        }
        // truncation is caught
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(DetectorModel::load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn detector_kind_names_round_trip() {
        for kind in DetectorKind::ALL {
            assert_eq!(DetectorKind::parse(kind.name()).unwrap(), kind);
        }
        assert!(matches!(DetectorKind::parse("svm"), Err(Error::Config(_))));
    }
}
