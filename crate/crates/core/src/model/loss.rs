//! Classification losses and their gradients w.r.t. logits.

use crate::error::{Error, Result};

/// Which loss drives a gradient computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    Dlr,
    /// max(z_label - max_{i != label} z_i, 0): positive while still classified
    /// correctly, zero (with zero gradient) once misclassified.
    MarginHinge,
}

/// Numerically stable softmax over one logit row, computed in f64.
pub fn softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&z| ((z as f64) - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of one sample and its gradient w.r.t. the logits (p - onehot).
pub fn cross_entropy(logits: &[f32], label: usize) -> Result<(f64, Vec<f32>)> {
    if label >= logits.len() {
        return Err(Error::contract(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let p = softmax(logits);
    let loss = -(p[label].max(f64::MIN_POSITIVE)).ln();
    let mut grad: Vec<f32> = p.iter().map(|&v| v as f32).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Difference-of-logits-ratio loss for one sample:
/// (z_y - max_{i != y} z_i) / (z_(1) - z_(3)) with z_(j) the j-th largest logit.
///
/// Requires at least 4 classes. A denominator below 1e-12 means the top and
/// third logits coincide and the value is undefined; that is a numeric error.
pub fn dlr(logits: &[f32], label: usize) -> Result<f64> {
    let (loss, _) = dlr_with_grad(logits, label)?;
    Ok(loss)
}

/// DLR value plus its gradient w.r.t. the logits.
pub fn dlr_with_grad(logits: &[f32], label: usize) -> Result<(f64, Vec<f32>)> {
    let k = logits.len();
    if k < 4 {
        return Err(Error::contract(format!(
            "dlr loss needs at least 4 classes, got {k}"
        )));
    }
    if label >= k {
        return Err(Error::contract(format!("label {label} out of range for {k} classes")));
    }
    // Indices sorted by logit value, descending; ties keep the lower index first.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).unwrap().then(a.cmp(&b)));
    let top = order[0];
    let third = order[2];
    let denom = logits[top] as f64 - logits[third] as f64;
    if denom < 1e-12 {
        return Err(Error::numeric(
            "dlr denominator below 1e-12: top and third logits are degenerate",
        ));
    }
    // Largest rival of the label class.
    let rival = if top != label { top } else { order[1] };
    let num = logits[label] as f64 - logits[rival] as f64;
    let loss = num / denom;

    let mut grad = vec![0.0f32; k];
    let inv = 1.0 / denom;
    // d num / d z
    grad[label] += inv as f32;
    grad[rival] -= inv as f32;
    // d (1/denom) / d z  ->  -num / denom^2 on the denominator's endpoints
    let dd = (-num / (denom * denom)) as f32;
    grad[top] += dd;
    grad[third] -= dd;
    Ok((loss, grad))
}

/// Hinged logit margin of one sample: max(z_label - max rival, 0) and its
/// subgradient (zero everywhere once the hinge is active).
pub fn margin_hinge(logits: &[f32], label: usize) -> (f64, Vec<f32>) {
    let k = logits.len();
    let mut rival = usize::MAX;
    for i in 0..k {
        if i != label && (rival == usize::MAX || logits[i] > logits[rival]) {
            rival = i;
        }
    }
    let margin = logits[label] as f64 - logits[rival] as f64;
    let mut grad = vec![0.0f32; k];
    if margin > 0.0 {
        grad[label] = 1.0;
        grad[rival] = -1.0;
        (margin, grad)
    } else {
        (0.0, grad)
    }
}

/// Unhinged margin z_label - max_{i != label} z_i; negative means misclassified.
pub fn margin(logits: &[f32], label: usize) -> f64 {
    let mut rival = usize::MAX;
    for i in 0..logits.len() {
        if i != label && (rival == usize::MAX || logits[i] > logits[rival]) {
            rival = i;
        }
    }
    logits[label] as f64 - logits[rival] as f64
}

/// Argmax with ties resolved to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let (loss, _) = cross_entropy(&[0.0; 10], 3).unwrap();
        assert!((loss - (10.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_grad_is_softmax_minus_onehot() {
        let logits = [1.0f32, -2.0, 0.5];
        let (_, g) = cross_entropy(&logits, 1).unwrap();
        let p = softmax(&logits);
        assert!((g[0] as f64 - p[0]).abs() < 1e-6);
        assert!((g[1] as f64 - (p[1] - 1.0)).abs() < 1e-6);
        assert!((g[2] as f64 - p[2]).abs() < 1e-6);
        let sum: f32 = g.iter().sum();
        assert!(sum.abs() < 1e-5);
    }

    #[test]
    fn dlr_correct_side() {
        // label holds the top logit: (3-2)/(3-1) = 0.5
        let v = dlr(&[3.0, 2.0, 1.0, 0.0], 0).unwrap();
        assert!((v - 0.5).abs() < 1e-9);
    }

    #[test]
    fn dlr_misclassified_side() {
        // top is class 1; label 0: (1-3)/(3-1) = -1
        let v = dlr(&[1.0, 3.0, 2.0, 0.0], 0).unwrap();
        assert!((v - (-1.0)).abs() < 1e-9);
    }

    #[test]
    fn dlr_rejects_three_classes() {
        assert!(matches!(dlr(&[1.0, 0.0, -1.0], 0), Err(Error::Contract(_))));
    }

    #[test]
    fn dlr_degenerate_logits_are_a_numeric_error() {
        let err = dlr(&[1.0, 1.0, 1.0, 1.0], 0).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }

    #[test]
    fn dlr_grad_matches_finite_differences() {
        let logits = [2.0f32, 0.7, -0.3, 1.1, 0.2];
        let (_, g) = dlr_with_grad(&logits, 3).unwrap();
        let h = 1e-3f32;
        for i in 0..logits.len() {
            let mut up = logits;
            up[i] += h;
            let mut dn = logits;
            dn[i] -= h;
            let fd = (dlr(&up, 3).unwrap() - dlr(&dn, 3).unwrap()) / (2.0 * h as f64);
            assert!(
                (fd - g[i] as f64).abs() < 1e-3,
                "logit {i}: fd {fd} vs analytic {}",
                g[i]
            );
        }
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
    }

    #[test]
    fn margin_hinge_clamps_at_zero() {
        let (m, g) = margin_hinge(&[3.0, 1.0, 2.0], 0);
        assert!((m - 1.0).abs() < 1e-9);
        assert_eq!(g, vec![1.0, 0.0, -1.0]);
        let (m, g) = margin_hinge(&[1.0, 3.0, 2.0], 0);
        assert_eq!(m, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
        assert!((margin(&[1.0, 3.0, 2.0], 0) - (-2.0)).abs() < 1e-9);
    }
}
