//! Budget-aware PGD with momentum and adaptive step halving.
//!
//! Schedule (fixed here; the config only chooses the iteration budget):
//! - objective is maximized: cross-entropy directly, the logit-ratio loss
//!   negated (lower ratio means the label is losing);
//! - step starts at 2ε; iterates use momentum 0.75 toward the signed step;
//! - checkpoints sit at fractions p1 = 0.22, p_{j+1} = p_j + max(p_j − p_{j−1}
//!   − 0.03, 0.06) of the budget; at each checkpoint the step is halved and
//!   the search restarts from the best iterate if (a) fewer than 75% of the
//!   steps since the last checkpoint improved the objective, or (b) neither
//!   the step size nor the best objective changed since the last checkpoint;
//! - the best-objective evaluated iterate is returned, never the last one.

use crate::error::{Error, Result};
use crate::model::{Classifier, LossKind};
use crate::tensor::Tensor;

use super::{check_attack_inputs, grad_sign, project_ball, AdversarialBatch, AttackMethod, NormKind};

const MOMENTUM: f64 = 0.75;
const RHO: f64 = 0.75;

/// Checkpoint iteration indices for a given budget. The fraction series
/// lives on a hundredths grid, so it is computed in integer hundredths to
/// keep ceil(p * n) exact.
fn checkpoints(n_iters: usize) -> Vec<usize> {
    let mut ps = vec![0usize, 22];
    loop {
        let j = ps.len();
        let next = ps[j - 1] + (ps[j - 1].saturating_sub(ps[j - 2] + 3)).max(6);
        if next >= 100 {
            break;
        }
        ps.push(next);
    }
    let mut ws: Vec<usize> = ps[1..].iter().map(|p| (p * n_iters).div_ceil(100)).collect();
    ws.dedup();
    ws.retain(|w| *w > 0 && *w < n_iters);
    ws
}

pub fn apgd(
    model: &dyn Classifier,
    images: &Tensor,
    labels: &[usize],
    epsilon: f32,
    n_iters: usize,
    loss: LossKind,
    seed: u64,
) -> Result<AdversarialBatch> {
    let b = check_attack_inputs(model, images, labels)?;
    if n_iters < 1 {
        return Err(Error::config("apgd needs at least 1 iteration"));
    }
    if loss == LossKind::Dlr && model.num_classes() < 4 {
        return Err(Error::contract(format!(
            "dlr loss needs at least 4 classes, got {}",
            model.num_classes()
        )));
    }
    // Maximize obj = CE, or obj = -dlr. Per-sample loss failures (degenerate
    // logit spread under dlr) freeze that sample at its best iterate so far.
    let obj_sign = match loss {
        LossKind::Dlr => -1.0f64,
        _ => 1.0,
    };
    let ckpts = checkpoints(n_iters);
    let sample_len = images.sample_len();

    let mut x_cur = images.clone();
    let mut x_prev = images.clone();
    let mut x_best = images.clone();
    let mut obj_best = vec![f64::NEG_INFINITY; b];
    let mut obj_last = vec![f64::NEG_INFINITY; b];
    let mut eta = vec![(2.0 * epsilon) as f64; b];
    let mut improved_steps = vec![0usize; b];
    let mut eta_at_ckpt = eta.clone();
    let mut best_at_ckpt = obj_best.clone();
    let mut last_ckpt = 0usize;

    for k in 0..n_iters {
        let (losses, grads) = model.loss_and_input_grad_tolerant(&x_cur, labels, loss)?;
        for s in 0..b {
            if let Some(lv) = losses[s] {
                let obj = obj_sign * lv;
                if obj > obj_best[s] {
                    obj_best[s] = obj;
                    x_best.sample_mut(s).copy_from_slice(x_cur.sample(s));
                }
                if k > 0 && obj > obj_last[s] {
                    improved_steps[s] += 1;
                }
                obj_last[s] = obj;
            }
        }
        // build the next iterate
        let mut x_next_data = vec![0.0f32; b * sample_len];
        for s in 0..b {
            let g = grads.sample(s);
            let xc = x_cur.sample(s);
            let xp = x_prev.sample(s);
            let clean = images.sample(s);
            let step = (eta[s] as f32) * (obj_sign as f32);
            let out = &mut x_next_data[s * sample_len..(s + 1) * sample_len];
            for i in 0..sample_len {
                // z = P(x + η·sign(g)) toward higher objective
                let z = (xc[i] + step * grad_sign(g[i]))
                    .clamp((clean[i] - epsilon).max(0.0), (clean[i] + epsilon).min(1.0));
                let v = if k == 0 {
                    z
                } else {
                    xc[i]
                        + (MOMENTUM as f32) * (z - xc[i])
                        + (1.0 - MOMENTUM as f32) * (xc[i] - xp[i])
                };
                out[i] = v;
            }
            project_ball(out, clean, epsilon);
        }
        x_prev = std::mem::replace(
            &mut x_cur,
            Tensor::new(images.shape().to_vec(), x_next_data)?,
        );

        let iter_done = k + 1;
        if ckpts.contains(&iter_done) {
            let span = iter_done - last_ckpt;
            for s in 0..b {
                let too_few = (improved_steps[s] as f64) < RHO * span as f64;
                let stalled = eta[s] == eta_at_ckpt[s] && obj_best[s] == best_at_ckpt[s];
                if too_few || stalled {
                    eta[s] /= 2.0;
                    // restart from the best point with momentum cleared
                    x_cur.sample_mut(s).copy_from_slice(x_best.sample(s));
                    x_prev.sample_mut(s).copy_from_slice(x_best.sample(s));
                }
                eta_at_ckpt[s] = eta[s];
                best_at_ckpt[s] = obj_best[s];
                improved_steps[s] = 0;
            }
            last_ckpt = iter_done;
        }
    }

    let method = match loss {
        LossKind::Dlr => AttackMethod::ApgdDlr,
        _ => AttackMethod::ApgdCe,
    };
    let mut batch = AdversarialBatch {
        method,
        epsilon,
        norm: NormKind::Linf,
        seed,
        clean: images.clone(),
        adversarial: x_best,
        labels: labels.to_vec(),
        success: Vec::new(),
        counts: vec![n_iters as u64; b],
        stages: None,
    };
    batch.finalize(model)?;
    Ok(batch)
}
