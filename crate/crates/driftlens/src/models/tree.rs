//! CART-style trees for multi-output variance reduction.
//!
//! One builder serves both model families: moment trees regress embedded
//! time targets, and probability trees train on 0/1 labels, where the
//! variance criterion selects the same splits as Gini impurity (the two
//! gains differ by a constant factor of two for binary targets).

use serde::{Deserialize, Serialize};

use crate::error::{DriftError, Result};

/// Gains at or below this are treated as zero and stop growth.
const GAIN_EPS: f64 = 1e-12;

/// A tree node: an axis-aligned split or a leaf with target statistics.
///
/// Left receives samples with `feature < threshold`, ties go right. Leaf ids
/// are unique and assigned in depth-first, left-first order starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature_index: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        id: usize,
        target_mean: Vec<f64>,
        /// Per-class sample counts for classification trees; empty for
        /// moment trees.
        class_counts: Vec<u64>,
        n: usize,
    },
}

/// A fitted tree plus the statistics recorded during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlatTree", into = "FlatTree")]
pub struct Tree {
    pub root: TreeNode,
    pub n_leaves: usize,
    pub n_features: usize,
    pub n_train: usize,
    /// Impurity-based importance, normalized to sum 1 (all zero when the
    /// tree has no splits).
    pub feature_importance: Vec<f64>,
}

impl Tree {
    /// Leaf reached by `x`.
    pub fn leaf(&self, x: &[f64]) -> Result<&TreeNode> {
        if x.len() != self.n_features {
            return Err(DriftError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { .. } => return Ok(node),
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature_index] < *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn leaf_id(&self, x: &[f64]) -> Result<usize> {
        match self.leaf(x)? {
            TreeNode::Leaf { id, .. } => Ok(*id),
            _ => unreachable!(),
        }
    }

    pub fn predict_mean(&self, x: &[f64]) -> Result<&[f64]> {
        match self.leaf(x)? {
            TreeNode::Leaf { target_mean, .. } => Ok(target_mean),
            _ => unreachable!(),
        }
    }

    /// Laplace(+1)-smoothed probability of class 1.
    pub fn predict_proba_after(&self, x: &[f64]) -> Result<f64> {
        match self.leaf(x)? {
            TreeNode::Leaf {
                class_counts, n, ..
            } => {
                debug_assert_eq!(class_counts.len(), 2);
                Ok((class_counts[1] as f64 + 1.0) / (*n as f64 + 2.0))
            }
            _ => unreachable!(),
        }
    }

    /// Leaf sample counts in id order.
    pub fn leaf_sizes(&self) -> Vec<usize> {
        let mut out = vec![0usize; self.n_leaves];
        fn walk(node: &TreeNode, out: &mut [usize]) {
            match node {
                TreeNode::Leaf { id, n, .. } => out[*id] = *n,
                TreeNode::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        walk(&self.root, &mut out);
        out
    }

    pub fn depth(&self) -> usize {
        fn walk(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }
}

/// Fits a variance-reduction tree.
///
/// `targets` holds one vector per row; `labels`, when given, records 0/1
/// class counts in the leaves. `feature_pool` limits split candidates per
/// node: `None` evaluates every feature, `Some((k, rng))` draws `k` distinct
/// features per node from the tree's own RNG stream.
pub fn fit_tree(
    rows: &[Vec<f64>],
    targets: &[Vec<f64>],
    labels: Option<&[u8]>,
    indices: &[usize],
    max_depth: usize,
    min_leaf: usize,
    feature_pool: Option<(usize, rand_chacha::ChaCha8Rng)>,
) -> Result<Tree> {
    if rows.is_empty() || indices.is_empty() {
        return Err(DriftError::EmptyDataset);
    }
    let n_features = rows[0].len();
    if indices.len() < 2 * min_leaf.max(1) {
        return Err(DriftError::TooFewSamples {
            needed: 2 * min_leaf.max(1),
            got: indices.len(),
        });
    }
    let (n_candidates, rng) = match feature_pool {
        Some((k, rng)) => (k.clamp(1, n_features), Some(rng)),
        None => (n_features, None),
    };
    let mut builder = Builder {
        rows,
        targets,
        labels,
        max_depth,
        min_leaf: min_leaf.max(1),
        n_candidates,
        rng,
        importance_raw: vec![0.0; n_features],
        next_leaf_id: 0,
        n_root: indices.len(),
    };
    let mut idx = indices.to_vec();
    let root = builder.build(&mut idx, 0);
    let total: f64 = builder.importance_raw.iter().sum();
    let feature_importance = if total > 0.0 {
        builder.importance_raw.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; n_features]
    };
    Ok(Tree {
        root,
        n_leaves: builder.next_leaf_id,
        n_features,
        n_train: indices.len(),
        feature_importance,
    })
}

struct Builder<'a> {
    rows: &'a [Vec<f64>],
    targets: &'a [Vec<f64>],
    labels: Option<&'a [u8]>,
    max_depth: usize,
    min_leaf: usize,
    n_candidates: usize,
    rng: Option<rand_chacha::ChaCha8Rng>,
    importance_raw: Vec<f64>,
    next_leaf_id: usize,
    n_root: usize,
}

struct NodeStats {
    sums: Vec<f64>,
    sumsq: f64,
    n: usize,
}

impl NodeStats {
    fn sse(&self) -> f64 {
        let n = self.n as f64;
        let mean_part: f64 = self.sums.iter().map(|s| s * s / n).sum();
        (self.sumsq - mean_part).max(0.0)
    }
}

impl<'a> Builder<'a> {
    fn stats(&self, indices: &[usize]) -> NodeStats {
        let m = self.targets[indices[0]].len();
        let mut sums = vec![0.0; m];
        let mut sumsq = 0.0;
        for &i in indices {
            for (s, &y) in sums.iter_mut().zip(&self.targets[i]) {
                *s += y;
                sumsq += y * y;
            }
        }
        NodeStats {
            sums,
            sumsq,
            n: indices.len(),
        }
    }

    fn make_leaf(&mut self, indices: &[usize], stats: &NodeStats) -> TreeNode {
        let id = self.next_leaf_id;
        self.next_leaf_id += 1;
        let n = stats.n;
        let target_mean = stats.sums.iter().map(|s| s / n as f64).collect();
        let class_counts = match self.labels {
            Some(labels) => {
                let mut counts = vec![0u64; 2];
                for &i in indices {
                    counts[labels[i] as usize] += 1;
                }
                counts
            }
            None => Vec::new(),
        };
        TreeNode::Leaf {
            id,
            target_mean,
            class_counts,
            n,
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.importance_raw.len();
        if self.n_candidates >= d || self.rng.is_none() {
            return (0..d).collect();
        }
        use rand::seq::SliceRandom;
        let mut pool: Vec<usize> = (0..d).collect();
        let rng = self.rng.as_mut().unwrap();
        let (chosen, _) = pool.partial_shuffle(rng, self.n_candidates);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();
        chosen
    }

    fn build(&mut self, indices: &mut [usize], depth: usize) -> TreeNode {
        let stats = self.stats(indices);
        let node_sse = stats.sse();
        if depth >= self.max_depth || indices.len() < 2 * self.min_leaf || node_sse <= GAIN_EPS {
            return self.make_leaf(indices, &stats);
        }

        let candidates = self.candidate_features();
        let mut best: Option<(f64, usize, f64)> = None;
        let m = stats.sums.len();
        let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(indices.len());
        for &feat in &candidates {
            scratch.clear();
            scratch.extend(indices.iter().map(|&i| (self.rows[i][feat], i)));
            scratch.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));

            let mut left_sums = vec![0.0; m];
            let mut left_sumsq = 0.0;
            for pos in 0..scratch.len() - 1 {
                let (value, idx) = scratch[pos];
                for (s, &y) in left_sums.iter_mut().zip(&self.targets[idx]) {
                    *s += y;
                    left_sumsq += y * y;
                }
                let next_value = scratch[pos + 1].0;
                if value == next_value {
                    continue;
                }
                let n_left = pos + 1;
                let n_right = scratch.len() - n_left;
                if n_left < self.min_leaf || n_right < self.min_leaf {
                    continue;
                }
                let threshold = 0.5 * (value + next_value);
                // Degenerate midpoints (adjacent floats) would send `value`
                // right and break the scan's partition.
                if !(threshold > value && threshold <= next_value) {
                    continue;
                }
                let nl = n_left as f64;
                let nr = n_right as f64;
                let mut left_mean_part = 0.0;
                let mut right_mean_part = 0.0;
                for c in 0..m {
                    let ls = left_sums[c];
                    let rs = stats.sums[c] - ls;
                    left_mean_part += ls * ls / nl;
                    right_mean_part += rs * rs / nr;
                }
                let sse_left = (left_sumsq - left_mean_part).max(0.0);
                let sse_right = ((stats.sumsq - left_sumsq) - right_mean_part).max(0.0);
                let gain = node_sse - sse_left - sse_right;
                // Strict improvement keeps the documented tie-break: lowest
                // feature index, then lowest threshold.
                if gain > GAIN_EPS && best.map_or(true, |(g, _, _)| gain > g) {
                    best = Some((gain, feat, threshold));
                }
            }
        }

        let Some((gain, feature_index, threshold)) = best else {
            return self.make_leaf(indices, &stats);
        };
        self.importance_raw[feature_index] += gain / self.n_root as f64;

        let mut left_idx = Vec::new();
        let mut right_idx = Vec::new();
        for &i in indices.iter() {
            if self.rows[i][feature_index] < threshold {
                left_idx.push(i);
            } else {
                right_idx.push(i);
            }
        }
        let left = self.build(&mut left_idx, depth + 1);
        let right = self.build(&mut right_idx, depth + 1);
        TreeNode::Split {
            feature_index,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

// ---------------------------------------------------------------------------
// Flattened serialization: nodes stored as a preorder array with child links.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum FlatNode {
    Split {
        feature_index: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        id: usize,
        target_mean: Vec<f64>,
        class_counts: Vec<u64>,
        n: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlatTree {
    nodes: Vec<FlatNode>,
    n_leaves: usize,
    n_features: usize,
    n_train: usize,
    feature_importance: Vec<f64>,
}

impl From<Tree> for FlatTree {
    fn from(tree: Tree) -> Self {
        fn flatten(node: &TreeNode, nodes: &mut Vec<FlatNode>) -> usize {
            match node {
                TreeNode::Leaf {
                    id,
                    target_mean,
                    class_counts,
                    n,
                } => {
                    nodes.push(FlatNode::Leaf {
                        id: *id,
                        target_mean: target_mean.clone(),
                        class_counts: class_counts.clone(),
                        n: *n,
                    });
                    nodes.len() - 1
                }
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    let slot = nodes.len();
                    nodes.push(FlatNode::Split {
                        feature_index: *feature_index,
                        threshold: *threshold,
                        left: 0,
                        right: 0,
                    });
                    let l = flatten(left, nodes);
                    let r = flatten(right, nodes);
                    if let FlatNode::Split { left, right, .. } = &mut nodes[slot] {
                        *left = l;
                        *right = r;
                    }
                    slot
                }
            }
        }
        let mut nodes = Vec::new();
        flatten(&tree.root, &mut nodes);
        FlatTree {
            nodes,
            n_leaves: tree.n_leaves,
            n_features: tree.n_features,
            n_train: tree.n_train,
            feature_importance: tree.feature_importance,
        }
    }
}

impl TryFrom<FlatTree> for Tree {
    type Error = String;

    fn try_from(flat: FlatTree) -> std::result::Result<Self, Self::Error> {
        fn rebuild(
            nodes: &[FlatNode],
            at: usize,
            guard: usize,
        ) -> std::result::Result<TreeNode, String> {
            if guard > nodes.len() {
                return Err("cyclic node references".to_string());
            }
            match nodes.get(at).ok_or("node index out of range")? {
                FlatNode::Leaf {
                    id,
                    target_mean,
                    class_counts,
                    n,
                } => Ok(TreeNode::Leaf {
                    id: *id,
                    target_mean: target_mean.clone(),
                    class_counts: class_counts.clone(),
                    n: *n,
                }),
                FlatNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => Ok(TreeNode::Split {
                    feature_index: *feature_index,
                    threshold: *threshold,
                    left: Box::new(rebuild(nodes, *left, guard + 1)?),
                    right: Box::new(rebuild(nodes, *right, guard + 1)?),
                }),
            }
        }
        Ok(Tree {
            root: rebuild(&flat.nodes, 0, 0)?,
            n_leaves: flat.n_leaves,
            n_features: flat.n_features,
            n_train: flat.n_train,
            feature_importance: flat.feature_importance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_indices(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn identical_targets_give_single_leaf() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let targets = vec![vec![0.7, -0.2]; 10];
        let tree = fit_tree(&rows, &targets, None, &all_indices(10), 8, 1, None).unwrap();
        assert_eq!(tree.n_leaves, 1);
        match &tree.root {
            TreeNode::Leaf { target_mean, .. } => {
                assert!((target_mean[0] - 0.7).abs() < 1e-12);
                assert!((target_mean[1] + 0.2).abs() < 1e-12);
            }
            _ => panic!("expected leaf"),
        }
    }

    #[test]
    fn separable_split_at_midpoint() {
        let rows = vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0]];
        let targets = vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0]];
        let tree = fit_tree(&rows, &targets, None, &all_indices(4), 8, 1, None).unwrap();
        assert_eq!(tree.n_leaves, 2);
        match &tree.root {
            TreeNode::Split {
                feature_index,
                threshold,
                ..
            } => {
                assert_eq!(*feature_index, 0);
                assert!((threshold - 0.5).abs() < 1e-12);
            }
            _ => panic!("expected split"),
        }
        assert_eq!(tree.predict_mean(&[0.0]).unwrap(), &[0.0]);
        assert_eq!(tree.predict_mean(&[1.0]).unwrap(), &[1.0]);
    }

    #[test]
    fn leaf_ids_depth_first() {
        // x in {0,1,2,3}, targets step at 0.5 then 2.5: expect 3+ leaves with
        // ids in left-first order.
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![(i / 2) as f64]).collect();
        let targets: Vec<Vec<f64>> = (0..8)
            .map(|i| {
                vec![match i / 2 {
                    0 => 0.0,
                    1 => 1.0,
                    2 => 4.0,
                    _ => 9.0,
                }]
            })
            .collect();
        let tree = fit_tree(&rows, &targets, None, &all_indices(8), 8, 1, None).unwrap();
        assert_eq!(tree.n_leaves, 4);
        let ids: Vec<usize> = [0.0, 1.0, 2.0, 3.0]
            .iter()
            .map(|&x| tree.leaf_id(&[x]).unwrap())
            .collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn leaf_sizes_sum_to_train_size() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i % 7) as f64, (i % 3) as f64])
            .collect();
        let targets: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 5) as f64]).collect();
        let tree = fit_tree(&rows, &targets, None, &all_indices(40), 4, 2, None).unwrap();
        assert_eq!(tree.leaf_sizes().iter().sum::<usize>(), 40);
    }

    #[test]
    fn class_counts_recorded() {
        let rows = vec![vec![0.0], vec![0.0], vec![0.0], vec![1.0]];
        let labels = vec![0u8, 0, 1, 1];
        let targets: Vec<Vec<f64>> = labels.iter().map(|&l| vec![l as f64]).collect();
        let tree = fit_tree(&rows, &targets, Some(&labels), &all_indices(4), 0, 1, None).unwrap();
        // depth 0 forces a single leaf: counts (2, 2)
        match &tree.root {
            TreeNode::Leaf {
                class_counts, n, ..
            } => {
                assert_eq!(class_counts, &vec![2, 2]);
                assert_eq!(*n, 4);
            }
            _ => panic!("expected leaf"),
        }
    }

    #[test]
    fn importance_single_feature() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![0.5, (i % 4) as f64, 1.0]).collect();
        let targets: Vec<Vec<f64>> = (0..20).map(|i| vec![((i % 4) / 2) as f64]).collect();
        let tree = fit_tree(&rows, &targets, None, &all_indices(20), 8, 1, None).unwrap();
        assert_eq!(tree.feature_importance[1], 1.0);
        assert_eq!(tree.feature_importance[0], 0.0);
        assert_eq!(tree.feature_importance[2], 0.0);
    }

    #[test]
    fn serialization_round_trip_is_lossless() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos()])
            .collect();
        let targets: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64) / 29.0]).collect();
        let tree = fit_tree(&rows, &targets, None, &all_indices(30), 5, 2, None).unwrap();
        let json = serde_json::to_string(&tree).unwrap();
        let back: Tree = serde_json::from_str(&json).unwrap();
        assert_eq!(tree, back);
        let json2 = serde_json::to_string(&back).unwrap();
        assert_eq!(json, json2);
    }
}
