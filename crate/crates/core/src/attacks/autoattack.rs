//! Standard-mode ensemble: APGD-CE → APGD-DLR → Square, with sequential
//! hand-off. Each stage attacks only the samples every earlier stage failed
//! on; already-misclassified samples are attributed to the clean stage and
//! never attacked. Samples no stage fools keep their clean image.

use crate::error::{Error, Result};
use crate::model::{argmax, Classifier, LossKind};
use crate::tensor::Tensor;

use super::{
    apgd, check_attack_inputs, square_attack, AdversarialBatch, AttackMethod, NormKind,
    SquareParams, StageTag,
};

pub fn autoattack_standard(
    model: &dyn Classifier,
    images: &Tensor,
    labels: &[usize],
    epsilon: f32,
    n_iters: usize,
    square: &SquareParams,
    seed: u64,
) -> Result<AdversarialBatch> {
    let b = check_attack_inputs(model, images, labels)?;
    if model.num_classes() < 4 {
        return Err(Error::contract(format!(
            "autoattack includes the dlr member and needs at least 4 classes, got {}",
            model.num_classes()
        )));
    }
    let sample_len = images.sample_len();

    let mut adv_data = images.data().to_vec();
    let mut stages = vec![StageTag::None; b];
    let mut counts = vec![0u64; b];

    // clean stage: whatever the model already misclassifies needs no attack
    let clean_logits = model.forward_batch(images)?;
    let mut remaining: Vec<usize> = Vec::new();
    for s in 0..b {
        if argmax(clean_logits.sample(s)) != labels[s] {
            stages[s] = StageTag::Clean;
        } else {
            remaining.push(s);
        }
    }

    for stage in [StageTag::ApgdCe, StageTag::ApgdDlr, StageTag::Square] {
        if remaining.is_empty() {
            break;
        }
        let sub_images = gather(images, &remaining, sample_len)?;
        let sub_labels: Vec<usize> = remaining.iter().map(|&s| labels[s]).collect();
        let member = match stage {
            StageTag::ApgdCe => {
                apgd(model, &sub_images, &sub_labels, epsilon, n_iters, LossKind::CrossEntropy, seed)?
            }
            StageTag::ApgdDlr => {
                apgd(model, &sub_images, &sub_labels, epsilon, n_iters, LossKind::Dlr, seed)?
            }
            StageTag::Square => square_attack(
                model,
                &sub_images,
                &sub_labels,
                epsilon,
                square.n_queries,
                square.p_init,
                seed,
            )?,
            _ => unreachable!(),
        };
        let mut still_failed = Vec::with_capacity(remaining.len());
        for (i, &s) in remaining.iter().enumerate() {
            counts[s] += member.counts[i];
            if member.success[i] {
                stages[s] = stage;
                adv_data[s * sample_len..(s + 1) * sample_len]
                    .copy_from_slice(member.adversarial.sample(i));
            } else {
                still_failed.push(s);
            }
        }
        remaining = still_failed;
    }

    let adversarial = Tensor::new(images.shape().to_vec(), adv_data)?;
    let mut batch = AdversarialBatch {
        method: AttackMethod::Autoattack,
        epsilon,
        norm: NormKind::Linf,
        seed,
        clean: images.clone(),
        adversarial,
        labels: labels.to_vec(),
        success: Vec::new(),
        counts,
        stages: Some(stages),
    };
    batch.finalize(model)?;
    Ok(batch)
}

fn gather(images: &Tensor, indices: &[usize], sample_len: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(indices.len() * sample_len);
    for &s in indices {
        data.extend_from_slice(images.sample(s));
    }
    let mut shape = images.shape().to_vec();
    shape[0] = indices.len();
    Tensor::new(shape, data)
}
