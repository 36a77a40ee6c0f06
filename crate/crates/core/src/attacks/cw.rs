//! Carlini-Wagner l2 attack in tanh space.
//!
//! Minimizes ||x(w) - x0||² + c · f(x(w)) with x(w) = ½(tanh(w) + 1) and
//! f = max(z_label - max rival z, 0), by plain gradient descent for
//! inner_iters steps per round. c starts at c_init; each round the per-sample
//! binary search multiplies c by 10 while no success bounds it from above
//! (capped at 1e4) and bisects toward smaller c after the first success. The
//! returned adversarial is the successful candidate
//! of minimal l2 distance across all rounds, or the clean image if every
//! round failed. The distance term uses the squared norm and f reads raw
//! logits; both keep gradients non-vanishing where the plain-norm/softmax
//! variants flatten out, without moving the decision boundary.

use crate::error::Result;
use crate::model::{Classifier, LossKind};
use crate::tensor::Tensor;

use super::{check_attack_inputs, AdversarialBatch, AttackMethod, NormKind};

const C_CAP: f64 = 1e4;
const ATANH_CLAMP: f32 = 1e-6;

pub fn cw_l2(
    model: &dyn Classifier,
    images: &Tensor,
    labels: &[usize],
    c_init: f64,
    binary_search_steps: usize,
    inner_iters: usize,
    lr: f32,
) -> Result<AdversarialBatch> {
    let b = check_attack_inputs(model, images, labels)?;
    let sample_len = images.sample_len();

    // tanh-space anchor: w0 = atanh(2·clamp(x0) − 1) reproduces x0 exactly
    // for interior pixels and to within the clamp at the box edges.
    let w_init: Vec<f32> = images
        .data()
        .iter()
        .map(|&x| {
            let xc = x.clamp(ATANH_CLAMP, 1.0 - ATANH_CLAMP);
            (2.0 * xc - 1.0).atanh()
        })
        .collect();

    let mut c = vec![c_init; b];
    let mut lo = vec![0.0f64; b];
    let mut hi = vec![f64::INFINITY; b];
    let mut best_l2 = vec![f64::INFINITY; b];
    let mut best_adv: Vec<Option<Vec<f32>>> = vec![None; b];

    for _round in 0..binary_search_steps {
        // each round restarts the optimizer at the clean anchor
        let mut w = w_init.clone();
        let mut succeeded = vec![false; b];
        for _step in 0..inner_iters {
            let x_data: Vec<f32> = w.iter().map(|v| 0.5 * (v.tanh() + 1.0)).collect();
            let x = Tensor::new(images.shape().to_vec(), x_data)?;
            let (f_vals, f_grads) =
                model.loss_and_input_grad(&x, labels, LossKind::MarginHinge)?;
            for s in 0..b {
                if f_vals[s] == 0.0 {
                    // hinge inactive: the candidate is (at least) on the boundary
                    succeeded[s] = true;
                    let mut l2 = 0.0f64;
                    let xs = x.sample(s);
                    let cs = images.sample(s);
                    for i in 0..sample_len {
                        let d = (xs[i] - cs[i]) as f64;
                        l2 += d * d;
                    }
                    let l2 = l2.sqrt();
                    if l2 < best_l2[s] {
                        best_l2[s] = l2;
                        best_adv[s] = Some(xs.to_vec());
                    }
                }
            }
            // gradient step: d/dw = (2(x - x0) + c·∇f) · ½(1 - tanh²(w))
            for s in 0..b {
                let xs = x.sample(s);
                let cs = images.sample(s);
                let gs = f_grads.sample(s);
                let cc = c[s] as f32;
                let row = &mut w[s * sample_len..(s + 1) * sample_len];
                for i in 0..sample_len {
                    let dldx = 2.0 * (xs[i] - cs[i]) + cc * gs[i];
                    let t = row[i].tanh();
                    row[i] -= lr * dldx * 0.5 * (1.0 - t * t);
                }
            }
        }
        for s in 0..b {
            if succeeded[s] {
                hi[s] = c[s];
                c[s] = 0.5 * (lo[s] + hi[s]);
            } else {
                lo[s] = c[s];
                c[s] = if hi[s].is_finite() {
                    0.5 * (lo[s] + hi[s])
                } else {
                    // no upper bound yet: escalate fast so a handful of rounds
                    // spans the eight decades between 1e-3 and the cap
                    (10.0 * c[s]).min(C_CAP)
                };
            }
        }
    }

    let mut adv_data = images.data().to_vec();
    for s in 0..b {
        if let Some(candidate) = &best_adv[s] {
            adv_data[s * sample_len..(s + 1) * sample_len].copy_from_slice(candidate);
        }
    }
    let adversarial = Tensor::new(images.shape().to_vec(), adv_data)?;
    let total_steps = (binary_search_steps * inner_iters) as u64;
    let mut batch = AdversarialBatch {
        method: AttackMethod::Cw,
        epsilon: 0.0,
        norm: NormKind::L2,
        seed: 0,
        clean: images.clone(),
        adversarial,
        labels: labels.to_vec(),
        success: Vec::new(),
        counts: vec![total_steps; b],
        stages: None,
    };
    batch.finalize(model)?;
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::test_support::*;
    use crate::model::{LayerDesc, NetworkSpec, TrainedModel};

    #[test]
    fn tanh_anchor_is_half_at_w_zero() {
        // the parameterization identity the whole attack rests on
        let x = 0.5f32 * ((0.0f32).tanh() + 1.0);
        assert_eq!(x, 0.5);
    }

    #[test]
    fn already_misclassified_returns_near_zero_perturbation() {
        let spec = NetworkSpec {
            input: (1, 1, 2),
            classes: 2,
            layers: vec![LayerDesc::Flatten, LayerDesc::Dense { out: 2 }],
        };
        let mut model = TrainedModel::build(&spec, 0).unwrap();
        model
            .set_param("layer1.weight", Tensor::new(vec![2, 2], vec![0.0, 0.0, 1.0, 1.0]).unwrap())
            .unwrap();
        model.set_param("layer1.bias", Tensor::new(vec![2], vec![0.0, 0.1]).unwrap()).unwrap();
        // prediction is class 1; label 0 => already misclassified, f = 0
        let images = Tensor::new(vec![1, 1, 1, 2], vec![0.4, 0.3]).unwrap();
        let batch = cw_l2(&model, &images, &[0], 1e-3, 3, 20, 0.02).unwrap();
        assert!(batch.success[0]);
        assert!(batch.adversarial.l2_distance(&batch.clean) <= 1e-3);
    }

    #[test]
    fn linear_two_class_lands_near_minimal_distance() {
        // Analytic minimal l2 distance to the boundary of a linear model is
        // |w·x + b| / ||w||. CW must come within 10%.
        let spec = NetworkSpec {
            input: (1, 1, 2),
            classes: 2,
            layers: vec![LayerDesc::Flatten, LayerDesc::Dense { out: 2 }],
        };
        let mut model = TrainedModel::build(&spec, 0).unwrap();
        let w = [2.0f32, -1.0];
        let bias = -0.25f32;
        model
            .set_param(
                "layer1.weight",
                Tensor::new(vec![2, 2], vec![0.0, 0.0, w[0], w[1]]).unwrap(),
            )
            .unwrap();
        model.set_param("layer1.bias", Tensor::new(vec![2], vec![0.0, bias]).unwrap()).unwrap();
        let x = [0.45f32, 0.55];
        let z1 = w[0] * x[0] + w[1] * x[1] + bias; // 0.9 - 0.55 - 0.25 = 0.1... label 1 wins
        assert!(z1 > 0.0);
        // label = 1 (correctly classified); attack must push across z1 = 0
        let images = Tensor::new(vec![1, 1, 1, 2], x.to_vec()).unwrap();
        let batch = cw_l2(&model, &images, &[1], 1e-3, 12, 60, 0.05).unwrap();
        assert!(batch.success[0], "cw failed on a linear model");
        let got = batch.adversarial.l2_distance(&batch.clean);
        let want = (z1.abs() / (w[0] * w[0] + w[1] * w[1]).sqrt()) as f64;
        assert!(
            got <= want * 1.10 && got >= want * 0.90,
            "cw distance {got} vs analytic {want}"
        );
    }

    #[test]
    fn outputs_stay_in_the_open_unit_box() {
        let model = tiny_model();
        let (images, labels) = tiny_batch(4);
        let batch = cw_l2(&model, &images, &labels, 1e-2, 4, 15, 0.05).unwrap();
        assert!(batch.adversarial.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn failure_keeps_the_clean_image() {
        // zero-gradient model: logits constant, f stuck at its hinge > 0
        let spec = NetworkSpec {
            input: (1, 1, 2),
            classes: 2,
            layers: vec![LayerDesc::Flatten, LayerDesc::Dense { out: 2 }],
        };
        let mut model = TrainedModel::build(&spec, 0).unwrap();
        model.set_param("layer1.weight", Tensor::zeros(vec![2, 2])).unwrap();
        model.set_param("layer1.bias", Tensor::new(vec![2], vec![1.0, 0.0]).unwrap()).unwrap();
        // logits [1, 0] always; label 0 stays correct; hinge f = 1 with zero grad
        let images = Tensor::new(vec![1, 1, 1, 2], vec![0.3, 0.7]).unwrap();
        let batch = cw_l2(&model, &images, &[0], 1e-3, 4, 10, 0.02).unwrap();
        assert!(!batch.success[0]);
        assert_eq!(batch.adversarial.data(), images.data());
    }
}
