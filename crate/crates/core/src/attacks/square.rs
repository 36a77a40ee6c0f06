//! Score-based black-box random search with square-shaped proposals.
//!
//! The model is touched only through forward calls. Proposals flip a random
//! square region to clean ± ε per channel and are kept exactly when the
//! margin (label logit minus best rival) strictly decreases. The square side
//! starts at a p_init fraction of the image area and halves on a fixed
//! schedule of query fractions; the stripe initialisation is the first
//! counted query. Already-misclassified samples return untouched with a
//! query count of zero.

use rand::Rng;

use crate::error::Result;
use crate::model::{loss::margin, Classifier};
use crate::rng::stream_rng;
use crate::tensor::Tensor;

use super::{check_attack_inputs, AdversarialBatch, AttackMethod, NormKind};

/// Query fractions after which the square side halves again.
const HALVING_FRACTIONS: [f64; 9] = [0.001, 0.005, 0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8];

fn square_side(query_idx: usize, n_queries: usize, p_init: f64, h: usize, w: usize) -> usize {
    let frac = query_idx as f64 / n_queries as f64;
    let halvings = HALVING_FRACTIONS.iter().filter(|t| frac >= **t).count();
    let p = p_init / f64::powi(2.0, halvings as i32);
    let side = ((p * (h * w) as f64).sqrt().round()) as usize;
    side.clamp(1, h.min(w))
}

pub fn square_attack(
    model: &dyn Classifier,
    images: &Tensor,
    labels: &[usize],
    epsilon: f32,
    n_queries: usize,
    p_init: f64,
    seed: u64,
) -> Result<AdversarialBatch> {
    let b = check_attack_inputs(model, images, labels)?;
    let (c, h, w) = model.input_dims();
    let sample_len = c * h * w;

    // Clean margins are bookkeeping, not counted queries.
    let clean_logits = model.forward_batch(images)?;

    let mut adv_data = images.data().to_vec();
    let mut counts = vec![0u64; b];
    for s in 0..b {
        let clean = images.sample(s);
        let label = labels[s];
        let mut best_margin = margin(clean_logits.sample(s), label);
        if best_margin < 0.0 {
            continue; // already misclassified; leave the clean image in place
        }
        let mut rng = stream_rng(seed, s as u64);
        let mut queries = 0u64;
        let mut best = clean.to_vec();

        // Stripe initialisation: per (channel, column) Rademacher ±ε.
        let mut candidate = clean.to_vec();
        for ch in 0..c {
            for x in 0..w {
                let sign: f32 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                for y in 0..h {
                    let i = ch * h * w + y * w + x;
                    candidate[i] = (clean[i] + sign * epsilon).clamp(0.0, 1.0);
                }
            }
        }
        let m = eval_margin(model, &candidate, c, h, w, label)?;
        queries += 1;
        if m < best_margin {
            best.copy_from_slice(&candidate);
            best_margin = m;
        }

        while best_margin >= 0.0 && (queries as usize) < n_queries {
            let side = square_side(queries as usize, n_queries, p_init, h, w);
            let r = rng.gen_range(0..=h - side);
            let col = rng.gen_range(0..=w - side);
            candidate.copy_from_slice(&best);
            for ch in 0..c {
                let sign: f32 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                for y in r..r + side {
                    for x in col..col + side {
                        let i = ch * h * w + y * w + x;
                        candidate[i] = (clean[i] + sign * epsilon).clamp(0.0, 1.0);
                    }
                }
            }
            let m = eval_margin(model, &candidate, c, h, w, label)?;
            queries += 1;
            if m < best_margin {
                best.copy_from_slice(&candidate);
                best_margin = m;
            }
        }
        adv_data[s * sample_len..(s + 1) * sample_len].copy_from_slice(&best);
        counts[s] = queries;
    }

    let adversarial = Tensor::new(images.shape().to_vec(), adv_data)?;
    let mut batch = AdversarialBatch {
        method: AttackMethod::Square,
        epsilon,
        norm: NormKind::Linf,
        seed,
        clean: images.clone(),
        adversarial,
        labels: labels.to_vec(),
        success: Vec::new(),
        counts,
        stages: None,
    };
    batch.finalize(model)?;
    Ok(batch)
}

fn eval_margin(
    model: &dyn Classifier,
    candidate: &[f32],
    c: usize,
    h: usize,
    w: usize,
    label: usize,
) -> Result<f64> {
    let batch = Tensor::new(vec![1, c, h, w], candidate.to_vec())?;
    let logits = model.forward_batch(&batch)?;
    Ok(margin(logits.sample(0), label))
}
