//! Single- and multi-step signed-gradient l∞ attacks: FGSM, BIM, PGD.

use rand::Rng;

use crate::error::Result;
use crate::model::{Classifier, LossKind};
use crate::rng::stream_rng;
use crate::tensor::Tensor;

use super::{
    check_attack_inputs, grad_sign, project_ball, AdversarialBatch, AttackMethod, NormKind,
};

/// x_adv = clip_[0,1]( x + ε · sign(∇_x CE(x, y)) ).
///
/// Untargeted ascent on the true label's cross-entropy; exactly one gradient
/// call for the whole batch.
pub fn fgsm(
    model: &dyn Classifier,
    images: &Tensor,
    labels: &[usize],
    epsilon: f32,
) -> Result<AdversarialBatch> {
    check_attack_inputs(model, images, labels)?;
    let (_, grads) = model.loss_and_input_grad(images, labels, LossKind::CrossEntropy)?;
    let mut adv = images.clone();
    for (a, g) in adv.data_mut().iter_mut().zip(grads.data()) {
        *a += epsilon * grad_sign(*g);
    }
    // ε·sign already respects the ball; this enforces the [0,1] box
    project_ball(adv.data_mut(), images.data(), epsilon);
    let mut batch = AdversarialBatch {
        method: AttackMethod::Fgsm,
        epsilon,
        norm: NormKind::Linf,
        seed: 0,
        clean: images.clone(),
        adversarial: adv,
        labels: labels.to_vec(),
        success: Vec::new(),
        counts: vec![1; labels.len()],
        stages: None,
    };
    batch.finalize(model)?;
    Ok(batch)
}

/// Iterative FGSM: α-sized signed steps, projected into the ε-ball and the
/// [0,1] box after every step.
pub fn bim(
    model: &dyn Classifier,
    images: &Tensor,
    labels: &[usize],
    epsilon: f32,
    alpha: f32,
    n_iters: usize,
) -> Result<AdversarialBatch> {
    check_attack_inputs(model, images, labels)?;
    let adv = iterate_signed(model, images, labels, epsilon, alpha, n_iters, images.clone())?;
    let mut batch = AdversarialBatch {
        method: AttackMethod::Bim,
        epsilon,
        norm: NormKind::Linf,
        seed: 0,
        clean: images.clone(),
        adversarial: adv,
        labels: labels.to_vec(),
        success: Vec::new(),
        counts: vec![n_iters as u64; labels.len()],
        stages: None,
    };
    batch.finalize(model)?;
    Ok(batch)
}

/// BIM dynamics from a uniform random start inside the ε-ball. Per-sample
/// randomness is keyed by (seed, sample index), so results do not depend on
/// batch order within the batch or on the worker count.
pub fn pgd(
    model: &dyn Classifier,
    images: &Tensor,
    labels: &[usize],
    epsilon: f32,
    alpha: f32,
    n_iters: usize,
    seed: u64,
) -> Result<AdversarialBatch> {
    let b = check_attack_inputs(model, images, labels)?;
    let mut start = images.clone();
    let sample_len = images.sample_len();
    for s in 0..b {
        let mut rng = stream_rng(seed, s as u64);
        let row = &mut start.data_mut()[s * sample_len..(s + 1) * sample_len];
        for v in row.iter_mut() {
            *v += rng.gen_range(-epsilon..=epsilon);
        }
    }
    project_ball(start.data_mut(), images.data(), epsilon);
    let adv = iterate_signed(model, images, labels, epsilon, alpha, n_iters, start)?;
    let mut batch = AdversarialBatch {
        method: AttackMethod::Pgd,
        epsilon,
        norm: NormKind::Linf,
        seed,
        clean: images.clone(),
        adversarial: adv,
        labels: labels.to_vec(),
        success: Vec::new(),
        counts: vec![n_iters as u64; labels.len()],
        stages: None,
    };
    batch.finalize(model)?;
    Ok(batch)
}

fn iterate_signed(
    model: &dyn Classifier,
    clean: &Tensor,
    labels: &[usize],
    epsilon: f32,
    alpha: f32,
    n_iters: usize,
    mut adv: Tensor,
) -> Result<Tensor> {
    for _ in 0..n_iters {
        let (_, grads) = model.loss_and_input_grad(&adv, labels, LossKind::CrossEntropy)?;
        for (a, g) in adv.data_mut().iter_mut().zip(grads.data()) {
            *a += alpha * grad_sign(*g);
        }
        project_ball(adv.data_mut(), clean.data(), epsilon);
    }
    Ok(adv)
}
