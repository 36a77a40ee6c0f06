//! Adversarial attack generators.
//!
//! Every attack returns an [`AdversarialBatch`] whose success flags are
//! recomputed from a fresh forward pass on the returned images — never from
//! the attack's own bookkeeping.

mod apgd;
mod autoattack;
mod cw;
mod deepfool;
mod gradient;
mod square;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{argmax, Classifier, LossKind};
use crate::tensor::Tensor;

pub use apgd::apgd;
pub use autoattack::autoattack_standard;
pub use cw::cw_l2;
pub use deepfool::deepfool;
pub use gradient::{bim, fgsm, pgd};
pub use square::square_attack;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    Fgsm,
    Bim,
    Pgd,
    Deepfool,
    Cw,
    ApgdCe,
    ApgdDlr,
    Square,
    Autoattack,
}

impl AttackMethod {
    pub const ALL: [AttackMethod; 9] = [
        AttackMethod::Fgsm,
        AttackMethod::Bim,
        AttackMethod::Pgd,
        AttackMethod::Deepfool,
        AttackMethod::Cw,
        AttackMethod::ApgdCe,
        AttackMethod::ApgdDlr,
        AttackMethod::Square,
        AttackMethod::Autoattack,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AttackMethod::Fgsm => "fgsm",
            AttackMethod::Bim => "bim",
            AttackMethod::Pgd => "pgd",
            AttackMethod::Deepfool => "deepfool",
            AttackMethod::Cw => "cw",
            AttackMethod::ApgdCe => "apgd_ce",
            AttackMethod::ApgdDlr => "apgd_dlr",
            AttackMethod::Square => "square",
            AttackMethod::Autoattack => "autoattack",
        }
    }

    pub fn parse(s: &str) -> Result<AttackMethod> {
        AttackMethod::ALL
            .iter()
            .find(|m| m.name() == s)
            .copied()
            .ok_or_else(|| {
                let valid: Vec<&str> = AttackMethod::ALL.iter().map(|m| m.name()).collect();
                Error::config(format!("unknown attack method {s:?}; valid: {}", valid.join(", ")))
            })
    }

    /// l2-norm attacks search for minimal perturbations and ignore epsilon.
    pub fn norm(&self) -> NormKind {
        match self {
            AttackMethod::Deepfool | AttackMethod::Cw => NormKind::L2,
            _ => NormKind::Linf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Linf,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CwParams {
    pub c_init: f64,
    pub binary_search_steps: usize,
    pub inner_iters: usize,
    pub lr: f32,
}

impl Default for CwParams {
    fn default() -> Self {
        CwParams { c_init: 1e-3, binary_search_steps: 5, inner_iters: 40, lr: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeepFoolParams {
    pub overshoot: f32,
    pub max_iter: usize,
}

impl Default for DeepFoolParams {
    fn default() -> Self {
        DeepFoolParams { overshoot: 0.02, max_iter: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareParams {
    pub n_queries: usize,
    pub p_init: f64,
}

impl Default for SquareParams {
    fn default() -> Self {
        SquareParams { n_queries: 2000, p_init: 0.8 }
    }
}

/// Full attack configuration; `new` picks sensible per-method defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub method: AttackMethod,
    /// l∞ budget in [0,1] pixel scale (8/255 by default).
    pub epsilon: f32,
    /// Step size for the iterative l∞ attacks.
    pub alpha: f32,
    pub n_iters: usize,
    pub norm: NormKind,
    pub seed: u64,
    pub cw: CwParams,
    pub deepfool: DeepFoolParams,
    pub square: SquareParams,
}

pub const DEFAULT_EPSILON: f32 = 8.0 / 255.0;

impl AttackConfig {
    pub fn new(method: AttackMethod) -> Self {
        let n_iters = match method {
            AttackMethod::Fgsm => 1,
            AttackMethod::Bim => 10,
            AttackMethod::Pgd => 40,
            AttackMethod::ApgdCe | AttackMethod::ApgdDlr | AttackMethod::Autoattack => 100,
            // l2 / black-box methods carry their budgets in their own params
            AttackMethod::Deepfool | AttackMethod::Cw | AttackMethod::Square => 1,
        };
        AttackConfig {
            method,
            epsilon: DEFAULT_EPSILON,
            alpha: 2.0 / 255.0,
            n_iters,
            norm: method.norm(),
            seed: 0,
            cw: CwParams::default(),
            deepfool: DeepFoolParams::default(),
            square: SquareParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon <= 1.0) {
            return Err(Error::config(format!("epsilon must lie in [0,1], got {}", self.epsilon)));
        }
        if self.n_iters < 1 {
            return Err(Error::config("n_iters must be at least 1"));
        }
        if self.norm != self.method.norm() {
            return Err(Error::config(format!(
                "method {} requires norm {:?}",
                self.method.name(),
                self.method.norm()
            )));
        }
        match self.method {
            AttackMethod::Bim | AttackMethod::Pgd => {
                if self.alpha <= 0.0 {
                    return Err(Error::config("alpha must be positive"));
                }
                // A zero budget collapses the ball to the clean image and any
                // step size projects back, so the cap only binds for ε > 0.
                if self.epsilon > 0.0 && self.alpha > self.epsilon {
                    return Err(Error::config(format!(
                        "multi-step l-inf attacks need alpha <= epsilon ({} > {})",
                        self.alpha, self.epsilon
                    )));
                }
            }
            AttackMethod::Cw => {
                if self.cw.c_init <= 0.0 {
                    return Err(Error::config("cw c_init must be positive"));
                }
                if self.cw.binary_search_steps < 1 || self.cw.inner_iters < 1 {
                    return Err(Error::config("cw binary_search_steps and inner_iters must be >= 1"));
                }
                if self.cw.lr <= 0.0 {
                    return Err(Error::config("cw lr must be positive"));
                }
            }
            AttackMethod::Deepfool => {
                if self.deepfool.max_iter < 1 {
                    return Err(Error::config("deepfool max_iter must be at least 1"));
                }
                if self.deepfool.overshoot < 0.0 {
                    return Err(Error::config("deepfool overshoot must be nonnegative"));
                }
            }
            AttackMethod::Square => {
                if self.square.n_queries < 1 {
                    return Err(Error::config("square n_queries must be at least 1"));
                }
                if !(self.square.p_init > 0.0 && self.square.p_init <= 1.0) {
                    return Err(Error::config("square p_init must lie in (0,1]"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Which ensemble member (or trivial circumstance) produced each sample's result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTag {
    /// Already misclassified before any attack ran.
    Clean,
    ApgdCe,
    ApgdDlr,
    Square,
    /// Every stage failed; the adversarial slot holds the clean image.
    None,
}

/// Paired clean/adversarial images plus per-sample outcome records.
#[derive(Debug, Clone)]
pub struct AdversarialBatch {
    pub method: AttackMethod,
    pub epsilon: f32,
    pub norm: NormKind,
    pub seed: u64,
    pub clean: Tensor,
    pub adversarial: Tensor,
    pub labels: Vec<usize>,
    /// Misclassified after the attack; always recomputed via `finalize`.
    pub success: Vec<bool>,
    /// Per-sample iteration or query count, per method semantics.
    pub counts: Vec<u64>,
    /// Present only for the autoattack ensemble.
    pub stages: Option<Vec<StageTag>>,
}

impl AdversarialBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Recompute success flags with a fresh forward pass on the stored
    /// adversarial images. This is the only way flags are ever set.
    pub fn finalize(&mut self, model: &dyn Classifier) -> Result<()> {
        let logits = model.forward_batch(&self.adversarial)?;
        self.success =
            (0..self.len()).map(|s| argmax(logits.sample(s)) != self.labels[s]).collect();
        Ok(())
    }

    /// Persist as `{stem}.json` (manifest) plus `{stem}.spdf` (image stacks).
    pub fn save(&self, stem: &Path) -> Result<()> {
        let manifest = Manifest {
            method: self.method,
            epsilon: self.epsilon,
            norm: self.norm,
            seed: self.seed,
            labels: self.labels.clone(),
            success: self.success.clone(),
            counts: self.counts.clone(),
            stages: self.stages.clone(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::format(format!("manifest serialization failed: {e}")))?;
        std::fs::write(stem.with_extension("json"), json)?;
        crate::spdf::write_tensors(
            &stem.with_extension("spdf"),
            &[("clean".to_string(), self.clean.clone()),
              ("adversarial".to_string(), self.adversarial.clone())],
        )
    }

    pub fn load(stem: &Path) -> Result<AdversarialBatch> {
        let json = std::fs::read_to_string(stem.with_extension("json"))?;
        let manifest: Manifest = serde_json::from_str(&json)
            .map_err(|e| Error::format(format!("manifest parse failed: {e}")))?;
        let tensors = crate::spdf::read_tensors(&stem.with_extension("spdf"))?;
        let mut clean = None;
        let mut adversarial = None;
        for (name, t) in tensors {
            match name.as_str() {
                "clean" => clean = Some(t),
                "adversarial" => adversarial = Some(t),
                other => return Err(Error::format(format!("unexpected tensor {other:?} in batch file"))),
            }
        }
        let (clean, adversarial) = match (clean, adversarial) {
            (Some(c), Some(a)) => (c, a),
            _ => return Err(Error::format("batch file must contain clean and adversarial stacks")),
        };
        if clean.shape() != adversarial.shape() {
            return Err(Error::format("clean and adversarial stacks disagree on shape"));
        }
        let b = clean.shape()[0];
        if manifest.labels.len() != b
            || manifest.success.len() != b
            || manifest.counts.len() != b
            || manifest.stages.as_ref().is_some_and(|s| s.len() != b)
        {
            return Err(Error::format("manifest lengths disagree with tensor batch size"));
        }
        Ok(AdversarialBatch {
            method: manifest.method,
            epsilon: manifest.epsilon,
            norm: manifest.norm,
            seed: manifest.seed,
            clean,
            adversarial,
            labels: manifest.labels,
            success: manifest.success,
            counts: manifest.counts,
            stages: manifest.stages,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    method: AttackMethod,
    epsilon: f32,
    norm: NormKind,
    seed: u64,
    labels: Vec<usize>,
    success: Vec<bool>,
    counts: Vec<u64>,
    stages: Option<Vec<StageTag>>,
}

/// Dispatch on the configured method.
pub fn run_attack(
    model: &dyn Classifier,
    config: &AttackConfig,
    images: &Tensor,
    labels: &[usize],
) -> Result<AdversarialBatch> {
    config.validate()?;
    match config.method {
        AttackMethod::Fgsm => fgsm(model, images, labels, config.epsilon),
        AttackMethod::Bim => bim(model, images, labels, config.epsilon, config.alpha, config.n_iters),
        AttackMethod::Pgd => {
            pgd(model, images, labels, config.epsilon, config.alpha, config.n_iters, config.seed)
        }
        AttackMethod::ApgdCe => {
            apgd(model, images, labels, config.epsilon, config.n_iters, LossKind::CrossEntropy, config.seed)
        }
        AttackMethod::ApgdDlr => {
            apgd(model, images, labels, config.epsilon, config.n_iters, LossKind::Dlr, config.seed)
        }
        AttackMethod::Square => square_attack(
            model,
            images,
            labels,
            config.epsilon,
            config.square.n_queries,
            config.square.p_init,
            config.seed,
        ),
        AttackMethod::Deepfool => deepfool(
            model,
            images,
            labels,
            config.deepfool.max_iter,
            config.deepfool.overshoot,
        ),
        AttackMethod::Cw => cw_l2(
            model,
            images,
            labels,
            config.cw.c_init,
            config.cw.binary_search_steps,
            config.cw.inner_iters,
            config.cw.lr,
        ),
        AttackMethod::Autoattack => autoattack_standard(
            model,
            images,
            labels,
            config.epsilon,
            config.n_iters,
            &config.square,
            config.seed,
        ),
    }
}

/// Shared validation for batch-shaped attack inputs.
pub(crate) fn check_attack_inputs(
    model: &dyn Classifier,
    images: &Tensor,
    labels: &[usize],
) -> Result<usize> {
    let (c, h, w) = model.input_dims();
    let shape = images.shape();
    if shape.len() != 4 || shape[1] != c || shape[2] != h || shape[3] != w {
        return Err(Error::shape(format!(
            "attack batch shape {shape:?} does not match model input ({c}, {h}, {w})"
        )));
    }
    let b = shape[0];
    if labels.len() != b {
        return Err(Error::contract(format!("{} labels for {b} images", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.num_classes()) {
        return Err(Error::contract(format!(
            "label {bad} out of range for {} classes",
            model.num_classes()
        )));
    }
    Ok(b)
}

/// Clamp each pixel into the ε-ball around `clean` intersected with [0,1].
pub(crate) fn project_ball(adv: &mut [f32], clean: &[f32], eps: f32) {
    for (a, c) in adv.iter_mut().zip(clean) {
        let lo = (c - eps).max(0.0);
        let hi = (c + eps).min(1.0);
        *a = a.clamp(lo, hi);
    }
}

/// sign with sign(0) = 0 (f32::signum maps 0 to 1, which would leak budget
/// onto pixels with exactly zero gradient).
pub(crate) fn grad_sign(g: f32) -> f32 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Wrapper that counts how often each model entry point is used. The square
/// attack's black-box contract is verified by asserting zero gradient calls.
pub struct CountingClassifier<'a> {
    inner: &'a dyn Classifier,
    forward_calls: AtomicUsize,
    gradient_calls: AtomicUsize,
}

impl<'a> CountingClassifier<'a> {
    pub fn new(inner: &'a dyn Classifier) -> Self {
        CountingClassifier {
            inner,
            forward_calls: AtomicUsize::new(0),
            gradient_calls: AtomicUsize::new(0),
        }
    }

    pub fn forward_calls(&self) -> usize {
        self.forward_calls.load(Ordering::SeqCst)
    }

    pub fn gradient_calls(&self) -> usize {
        self.gradient_calls.load(Ordering::SeqCst)
    }
}

impl Classifier for CountingClassifier<'_> {
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn input_dims(&self) -> (usize, usize, usize) {
        self.inner.input_dims()
    }

    fn forward_batch(&self, batch: &Tensor) -> Result<Tensor> {
        self.forward_calls.fetch_add(1, Ordering::SeqCst);
        self.inner.forward_batch(batch)
    }

    fn input_grads(&self, batch: &Tensor, logit_grads: &Tensor) -> Result<Tensor> {
        self.gradient_calls.fetch_add(1, Ordering::SeqCst);
        self.inner.input_grads(batch, logit_grads)
    }

    fn loss_and_input_grad(
        &self,
        batch: &Tensor,
        labels: &[usize],
        loss: LossKind,
    ) -> Result<(Vec<f64>, Tensor)> {
        self.gradient_calls.fetch_add(1, Ordering::SeqCst);
        self.inner.loss_and_input_grad(batch, labels, loss)
    }

    fn loss_and_input_grad_tolerant(
        &self,
        batch: &Tensor,
        labels: &[usize],
        loss: LossKind,
    ) -> Result<(Vec<Option<f64>>, Tensor)> {
        self.gradient_calls.fetch_add(1, Ordering::SeqCst);
        self.inner.loss_and_input_grad_tolerant(batch, labels, loss)
    }

    fn input_jacobian(&self, batch: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        self.gradient_calls.fetch_add(1, Ordering::SeqCst);
        self.inner.input_jacobian(batch)
    }
}
