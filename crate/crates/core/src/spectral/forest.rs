//! Random forest over CART trees: gini-impurity splits, sqrt-of-d feature
//! subsampling per node, and an index-keyed bootstrap over a canonical sample
//! pool.
//!
//! The pool is the training set sorted lexicographically (features, then
//! label) with exact duplicates merged into one weighted entry. Bootstrap
//! draws are indices into that pool from a (seed, tree)-keyed stream, so
//! - reordering the training rows changes nothing (the pool is order-free),
//! - duplicating every row only doubles all pool weights, which scales every
//!   impurity comparison and leaf ratio by the same factor and leaves the
//!   grown trees and all predictions unchanged.
//! Both properties hold exactly, not approximately, at min_leaf ≤ 1.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ForestHyper {
    pub n_trees: usize,
    /// Unlimited when None.
    pub max_depth: Option<u32>,
    /// Minimum total sample weight on each side of a split.
    pub min_leaf: f64,
    /// Disable to grow every tree on the full pool (useful for split-search
    /// oracles; defaults to true for proper bagging).
    pub bootstrap: bool,
}

impl Default for ForestHyper {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: None, min_leaf: 1.0, bootstrap: true }
    }
}

/// Sentinel index marking "no child"; a node with `feature == LEAF` is a leaf.
pub const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Class weights of the training samples that reached this node.
    pub w0: f64,
    pub w1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Probability of class 1: the leaf's class-weight ratio. Descends left
    /// when `row[feature] <= threshold`.
    pub fn proba(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            let node = &self.nodes[at];
            if node.feature == LEAF {
                return node.w1 / (node.w0 + node.w1);
            }
            at = if row[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }

    /// Structural soundness: a single rooted tree where every node is
    /// reachable exactly once, internal nodes have two in-range children,
    /// and every node carries positive finite weight.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::format("tree has no nodes"));
        }
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0u32];
        while let Some(at) = stack.pop() {
            let at = at as usize;
            if seen[at] {
                return Err(Error::format(format!("node {at} is reachable twice")));
            }
            seen[at] = true;
            let node = &self.nodes[at];
            if !(node.w0.is_finite() && node.w1.is_finite()) || node.w0 + node.w1 <= 0.0 {
                return Err(Error::format(format!("node {at} has invalid class weights")));
            }
            if node.feature == LEAF {
                if node.left != LEAF || node.right != LEAF {
                    return Err(Error::format(format!("leaf {at} has children")));
                }
            } else {
                if node.feature as usize >= n_features {
                    return Err(Error::format(format!(
                        "node {at} splits on feature {} of {n_features}",
                        node.feature
                    )));
                }
                if !node.threshold.is_finite() {
                    return Err(Error::format(format!("node {at} has a non-finite threshold")));
                }
                if node.left as usize >= n || node.right as usize >= n || node.left == node.right {
                    return Err(Error::format(format!("node {at} has invalid children")));
                }
                stack.push(node.left);
                stack.push(node.right);
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::format("tree has unreachable nodes"));
        }
        Ok(())
    }
}

struct Pool {
    rows: Vec<f64>,
    d: usize,
    weights: Vec<f64>,
    labels: Vec<u8>,
    cum_weights: Vec<f64>,
    total_weight: f64,
}

fn canonical_pool(x: &[f64], n: usize, d: usize, labels: &[u8]) -> Pool {
    let mut order: Vec<usize> = (0..n).collect();
    let cmp_rows = |&a: &usize, &b: &usize| -> Ordering {
        let (ra, rb) = (&x[a * d..(a + 1) * d], &x[b * d..(b + 1) * d]);
        for (va, vb) in ra.iter().zip(rb) {
            match va.total_cmp(vb) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
        labels[a].cmp(&labels[b])
    };
    order.sort_by(cmp_rows);
    let mut pool = Pool {
        rows: Vec::new(),
        d,
        weights: Vec::new(),
        labels: Vec::new(),
        cum_weights: Vec::new(),
        total_weight: 0.0,
    };
    for &i in &order {
        if !pool.weights.is_empty() {
            let last = pool.weights.len() - 1;
            let prev = &pool.rows[last * d..(last + 1) * d];
            let row = &x[i * d..(i + 1) * d];
            if pool.labels[last] == labels[i]
                && prev.iter().zip(row).all(|(a, b)| a.total_cmp(b) == Ordering::Equal)
            {
                pool.weights[last] += 1.0;
                continue;
            }
        }
        pool.rows.extend_from_slice(&x[i * d..(i + 1) * d]);
        pool.weights.push(1.0);
        pool.labels.push(labels[i]);
    }
    let mut acc = 0.0;
    for &w in &pool.weights {
        acc += w;
        pool.cum_weights.push(acc);
    }
    pool.total_weight = acc;
    pool
}

pub(crate) fn train_forest(
    x: &[f64],
    n: usize,
    d: usize,
    labels: &[u8],
    hyper: &ForestHyper,
    seed: u64,
) -> Result<Vec<Tree>> {
    if hyper.n_trees == 0 {
        return Err(Error::config("forest needs at least one tree"));
    }
    if !(hyper.min_leaf > 0.0) {
        return Err(Error::config("min_leaf must be positive"));
    }
    let pool = canonical_pool(x, n, d, labels);
    (0..hyper.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, 0x4000_0000 + t as u64);
            let samples: Vec<(u32, f64)> = if hyper.bootstrap {
                let mut counts = vec![0u32; pool.weights.len()];
                for _ in 0..pool.weights.len() {
                    let u = rng.gen::<f64>() * pool.total_weight;
                    let idx = pool
                        .cum_weights
                        .partition_point(|&c| c <= u)
                        .min(pool.weights.len() - 1);
                    counts[idx] += 1;
                }
                counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(i, &c)| (i as u32, c as f64 * pool.weights[i]))
                    .collect()
            } else {
                pool.weights.iter().enumerate().map(|(i, &w)| (i as u32, w)).collect()
            };
            let mut nodes = Vec::new();
            grow(&pool, &samples, 0, &mut rng, hyper, &mut nodes);
            let tree = Tree { nodes };
            tree.validate(d)?;
            Ok(tree)
        })
        .collect()
}

fn class_weights(pool: &Pool, samples: &[(u32, f64)]) -> (f64, f64) {
    let mut w = [0.0f64; 2];
    for &(i, wt) in samples {
        w[pool.labels[i as usize] as usize] += wt;
    }
    (w[0], w[1])
}

/// Weighted gini impurity contribution: (a+b)·(1 − (a/(a+b))² − (b/(a+b))²),
/// written to stay exactly linear under uniform weight scaling.
fn impurity(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s <= 0.0 {
        0.0
    } else {
        s - (a * a + b * b) / s
    }
}

fn grow(
    pool: &Pool,
    samples: &[(u32, f64)],
    depth: u32,
    rng: &mut impl Rng,
    hyper: &ForestHyper,
    nodes: &mut Vec<TreeNode>,
) -> u32 {
    let (w0, w1) = class_weights(pool, samples);
    let at_depth_cap = hyper.max_depth.is_some_and(|cap| depth >= cap);
    let mut best: Option<(f64, u32, f64)> = None; // (gain, feature, threshold)
    if w0 > 0.0 && w1 > 0.0 && samples.len() >= 2 && !at_depth_cap {
        let d = pool.d;
        let k = ((d as f64).sqrt() as usize).max(1).min(d);
        let mut feats: Vec<u32> = (0..d as u32).collect();
        for i in 0..k {
            let j = rng.gen_range(i..d);
            feats.swap(i, j);
        }
        let mut chosen = feats[..k].to_vec();
        chosen.sort_unstable();
        let parent_imp = impurity(w0, w1);
        let mut vals: Vec<(f64, f64, u8)> = Vec::with_capacity(samples.len());
        for f in chosen {
            vals.clear();
            for &(i, wt) in samples {
                vals.push((
                    pool.rows[i as usize * d + f as usize],
                    wt,
                    pool.labels[i as usize],
                ));
            }
            vals.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0.0f64; 2];
            for i in 0..vals.len() - 1 {
                left[vals[i].2 as usize] += vals[i].1;
                if vals[i].0 >= vals[i + 1].0 {
                    continue; // no boundary between equal values
                }
                let (l0, l1) = (left[0], left[1]);
                let (r0, r1) = (w0 - l0, w1 - l1);
                if l0 + l1 < hyper.min_leaf || r0 + r1 < hyper.min_leaf {
                    continue;
                }
                let gain = parent_imp - impurity(l0, l1) - impurity(r0, r1);
                if gain > 1e-12 && best.map_or(true, |(g, _, _)| gain > g) {
                    best = Some((gain, f, (vals[i].0 + vals[i + 1].0) / 2.0));
                }
            }
        }
    }
    let Some((_, feature, threshold)) = best else {
        nodes.push(TreeNode { feature: LEAF, threshold: 0.0, left: LEAF, right: LEAF, w0, w1 });
        return (nodes.len() - 1) as u32;
    };
    let at = nodes.len();
    nodes.push(TreeNode { feature, threshold, left: 0, right: 0, w0, w1 });
    let (ls, rs): (Vec<_>, Vec<_>) = samples
        .iter()
        .partition(|&&(i, _)| pool.rows[i as usize * pool.d + feature as usize] <= threshold);
    let left = grow(pool, &ls, depth + 1, rng, hyper, nodes);
    let right = grow(pool, &rs, depth + 1, rng, hyper, nodes);
    nodes[at].left = left;
    nodes[at].right = right;
    at as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    fn forest_proba(trees: &[Tree], row: &[f64]) -> f64 {
        trees.iter().map(|t| t.proba(row)).sum::<f64>() / trees.len() as f64
    }

    fn two_cluster_toy() -> (Vec<f64>, Vec<u8>) {
        let mut x = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let j = (i as f64) * 0.013;
            x.extend_from_slice(&[0.1 + j, 0.2 + j]);
            labels.push(0);
            x.extend_from_slice(&[0.8 - j, 0.9 - j]);
            labels.push(1);
        }
        (x, labels)
    }

    #[test]
    fn single_stump_recovers_the_threshold() {
        let x = vec![0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9];
        let labels = vec![0u8, 0, 0, 0, 1, 1, 1, 1];
        let hyper = ForestHyper {
            n_trees: 1,
            max_depth: Some(1),
            min_leaf: 1.0,
            bootstrap: false,
        };
        let trees = train_forest(&x, 8, 1, &labels, &hyper, 0).unwrap();
        assert_eq!(trees.len(), 1);
        let root = &trees[0].nodes[0];
        assert_eq!(root.feature, 0);
        // exhaustive search over midpoints: only 0.5 separates perfectly
        assert!((root.threshold - 0.5).abs() < 1e-12, "threshold {}", root.threshold);
        assert_eq!(trees[0].nodes.len(), 3);
        assert!(trees[0].proba(&[0.45]) < 0.5);
        assert!(trees[0].proba(&[0.55]) > 0.5);
    }

    #[test]
    fn duplicating_every_sample_changes_nothing() {
        let (x, labels) = two_cluster_toy();
        let hyper = ForestHyper { n_trees: 15, ..ForestHyper::default() };
        let base = train_forest(&x, labels.len(), 2, &labels, &hyper, 3).unwrap();
        let mut x2 = x.clone();
        x2.extend_from_slice(&x);
        let mut l2 = labels.clone();
        l2.extend_from_slice(&labels);
        let doubled = train_forest(&x2, l2.len(), 2, &l2, &hyper, 3).unwrap();
        for p in 0..9 {
            let probe = [0.1 + 0.1 * p as f64, 0.95 - 0.1 * p as f64];
            assert_eq!(
                forest_proba(&base, &probe).to_bits(),
                forest_proba(&doubled, &probe).to_bits(),
                "probe {probe:?}"
            );
        }
    }

    #[test]
    fn shuffling_training_rows_changes_nothing() {
        let (x, labels) = two_cluster_toy();
        let n = labels.len();
        let hyper = ForestHyper { n_trees: 15, ..ForestHyper::default() };
        let base = train_forest(&x, n, 2, &labels, &hyper, 3).unwrap();
        // reverse the row order
        let mut xr = Vec::new();
        let mut lr = Vec::new();
        for i in (0..n).rev() {
            xr.extend_from_slice(&x[i * 2..(i + 1) * 2]);
            lr.push(labels[i]);
        }
        let shuffled = train_forest(&xr, n, 2, &lr, &hyper, 3).unwrap();
        assert_eq!(base, shuffled);
    }

    #[test]
    fn training_is_deterministic_and_seed_sensitive() {
        let (x, labels) = two_cluster_toy();
        let hyper = ForestHyper { n_trees: 8, ..ForestHyper::default() };
        let a = train_forest(&x, labels.len(), 2, &labels, &hyper, 5).unwrap();
        let b = train_forest(&x, labels.len(), 2, &labels, &hyper, 5).unwrap();
        assert_eq!(a, b);
        let c = train_forest(&x, labels.len(), 2, &labels, &hyper, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn separable_clusters_are_classified_perfectly() {
        let (x, labels) = two_cluster_toy();
        let trees =
            train_forest(&x, labels.len(), 2, &labels, &ForestHyper::default(), 1).unwrap();
        for (row, &label) in x.chunks_exact(2).zip(&labels) {
            let p = forest_proba(&trees, row);
            assert_eq!(p >= 0.5, label == 1, "row {row:?} got p={p}");
        }
    }

    #[test]
    fn validate_rejects_malformed_trees() {
        let good = Tree {
            nodes: vec![
                TreeNode { feature: 0, threshold: 0.5, left: 1, right: 2, w0: 2.0, w1: 2.0 },
                TreeNode { feature: LEAF, threshold: 0.0, left: LEAF, right: LEAF, w0: 2.0, w1: 0.0 },
                TreeNode { feature: LEAF, threshold: 0.0, left: LEAF, right: LEAF, w0: 0.0, w1: 2.0 },
            ],
        };
        good.validate(1).unwrap();
        // child cycle
        let mut cyclic = good.clone();
        cyclic.nodes[0].right = 0;
        assert!(cyclic.validate(1).is_err());
        // orphan node
        let mut orphan = good.clone();
        orphan.nodes.push(TreeNode {
            feature: LEAF, threshold: 0.0, left: LEAF, right: LEAF, w0: 1.0, w1: 0.0,
        });
        assert!(orphan.validate(1).is_err());
        // feature out of range
        assert!(good.validate(0).is_err());
    }
}
