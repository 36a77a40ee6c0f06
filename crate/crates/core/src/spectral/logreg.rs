//! L2-regularized logistic regression trained by full-batch gradient descent
//! with a step size of 1/L, where L bounds the loss curvature (mean squared
//! row norm / 4 plus the ridge weight). Weights start at zero, so training is
//! deterministic without any seed.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogregHyper {
    /// Ridge penalty on the weights (the bias is never regularized).
    pub l2: f64,
    pub max_epochs: usize,
    /// Stop once the gradient's max-abs entry falls below this.
    pub tol: f64,
}

impl Default for LogregHyper {
    fn default() -> Self {
        Self { l2: 1e-4, max_epochs: 400, tol: 1e-7 }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z.clamp(-40.0, 40.0)).exp())
}

/// Returns (weights, bias) for rows `x` (flat, n×d) with 0/1 labels.
pub(crate) fn train_logreg(
    x: &[f64],
    n: usize,
    d: usize,
    labels: &[u8],
    hyper: &LogregHyper,
) -> (Vec<f64>, f64) {
    let mut w = vec![0.0f64; d];
    let mut b = 0.0f64;
    let mean_sq_norm =
        x.chunks_exact(d).map(|r| r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n as f64;
    let step = 1.0 / (mean_sq_norm / 4.0 + hyper.l2 + 1e-9);
    let mut gw = vec![0.0f64; d];
    for _ in 0..hyper.max_epochs {
        gw.fill(0.0);
        let mut gb = 0.0f64;
        for (row, &label) in x.chunks_exact(d).zip(labels) {
            let z = w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + b;
            let resid = sigmoid(z) - label as f64;
            for (g, v) in gw.iter_mut().zip(row) {
                *g += resid * v;
            }
            gb += resid;
        }
        let inv_n = 1.0 / n as f64;
        let mut gmax = (gb * inv_n).abs();
        for (g, wj) in gw.iter_mut().zip(&w) {
            *g = *g * inv_n + hyper.l2 * wj;
            gmax = gmax.max(g.abs());
        }
        gb *= inv_n;
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= step * g;
        }
        b -= step * gb;
        if gmax < hyper.tol {
            break;
        }
    }
    (w, b)
}
