//! Deterministic gradient-boosted regression trees on logistic loss.
//!
//! No row or column subsampling: identical input yields an identical
//! ensemble. Splits are exact greedy over all features with candidate
//! thresholds at midpoints between consecutive distinct values; leaf
//! values are Newton steps (gradient sum over hessian sum).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbdtHyper {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for GbdtHyper {
    fn default() -> Self {
        GbdtHyper { n_trees: 50, max_depth: 3, learning_rate: 0.1, min_leaf: 5 }
    }
}

/// Array-encoded tree node; leaves carry a weight, internal nodes a split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature: usize,
    pub split_value: f64,
    /// Child indices into the node array; `usize::MAX` marks a leaf.
    pub left: usize,
    pub right: usize,
    pub leaf_weight: f64,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.left == usize::MAX
    }

    fn leaf(weight: f64) -> Self {
        TreeNode {
            feature: 0,
            split_value: 0.0,
            left: usize::MAX,
            right: usize::MAX,
            leaf_weight: weight,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, features: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            let node = &self.nodes[idx];
            if node.is_leaf() {
                return node.leaf_weight;
            }
            idx = if features[node.feature] <= node.split_value {
                node.left
            } else {
                node.right
            };
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtClassifier {
    pub trees: Vec<RegressionTree>,
    pub learning_rate: f64,
    pub init_score: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct SplitChoice {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn newton_value(grad_sum: f64, hess_sum: f64) -> f64 {
    grad_sum / hess_sum.max(1e-12)
}

fn build_node(
    rows: &[usize],
    features: &[Vec<f64>],
    grad: &[f64],
    hess: &[f64],
    depth: usize,
    hyper: &GbdtHyper,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let g_sum: f64 = rows.iter().map(|&r| grad[r]).sum();
    let h_sum: f64 = rows.iter().map(|&r| hess[r]).sum();
    let make_leaf = |nodes: &mut Vec<TreeNode>| {
        nodes.push(TreeNode::leaf(newton_value(g_sum, h_sum)));
        nodes.len() - 1
    };
    if depth >= hyper.max_depth || rows.len() < 2 * hyper.min_leaf {
        return make_leaf(nodes);
    }
    let parent_score = g_sum * g_sum / h_sum.max(1e-12);
    let n_features = features[0].len();
    let mut best: Option<SplitChoice> = None;
    for f in 0..n_features {
        let mut order: Vec<usize> = rows.to_vec();
        order.sort_by(|&a, &b| {
            features[a][f]
                .partial_cmp(&features[b][f])
                .expect("finite features")
                .then(a.cmp(&b))
        });
        let mut gl = 0.0;
        let mut hl = 0.0;
        for i in 0..order.len() - 1 {
            let r = order[i];
            gl += grad[r];
            hl += hess[r];
            let left_n = i + 1;
            let right_n = order.len() - left_n;
            if left_n < hyper.min_leaf || right_n < hyper.min_leaf {
                continue;
            }
            let v = features[r][f];
            let v_next = features[order[i + 1]][f];
            if v == v_next {
                continue; // can't split between equal values
            }
            let gr = g_sum - gl;
            let hr = h_sum - hl;
            let gain =
                gl * gl / hl.max(1e-12) + gr * gr / hr.max(1e-12) - parent_score;
            let better = match &best {
                None => gain > 1e-12,
                Some(b) => gain > b.gain + 1e-12,
            };
            if better {
                best = Some(SplitChoice { gain, feature: f, threshold: 0.5 * (v + v_next) });
            }
        }
    }
    match best {
        None => make_leaf(nodes),
        Some(choice) => {
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                .iter()
                .partition(|&&r| features[r][choice.feature] <= choice.threshold);
            let slot = nodes.len();
            nodes.push(TreeNode::leaf(0.0)); // placeholder
            let left = build_node(&left_rows, features, grad, hess, depth + 1, hyper, nodes);
            let right = build_node(&right_rows, features, grad, hess, depth + 1, hyper, nodes);
            nodes[slot] = TreeNode {
                feature: choice.feature,
                split_value: choice.threshold,
                left,
                right,
                leaf_weight: 0.0,
            };
            slot
        }
    }
}

impl GbdtClassifier {
    /// Fit on binary labels with logistic loss.
    pub fn fit(features: &[Vec<f64>], labels: &[bool], hyper: &GbdtHyper) -> Result<Self> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::InvalidArgument(
                "classifier needs matching non-empty features and labels".into(),
            ));
        }
        let width = features[0].len();
        if features.iter().any(|f| f.len() != width) {
            return Err(Error::DimensionMismatch("ragged feature vectors".into()));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("features must be finite".into()));
        }
        let positives = labels.iter().filter(|&&l| l).count();
        if positives == 0 || positives == labels.len() {
            return Err(Error::InvalidArgument("classifier needs both labels".into()));
        }
        let p0 = positives as f64 / labels.len() as f64;
        let init_score = (p0 / (1.0 - p0)).ln();
        let n = labels.len();
        let mut scores = vec![init_score; n];
        let mut trees = Vec::with_capacity(hyper.n_trees);
        let all_rows: Vec<usize> = (0..n).collect();
        for _ in 0..hyper.n_trees {
            let mut grad = Vec::with_capacity(n);
            let mut hess = Vec::with_capacity(n);
            for i in 0..n {
                let p = sigmoid(scores[i]);
                let y = if labels[i] { 1.0 } else { 0.0 };
                grad.push(y - p);
                hess.push((p * (1.0 - p)).max(1e-12));
            }
            let mut nodes = Vec::new();
            build_node(&all_rows, features, &grad, &hess, 0, hyper, &mut nodes);
            let tree = RegressionTree { nodes };
            for i in 0..n {
                scores[i] += hyper.learning_rate * tree.predict(&features[i]);
            }
            trees.push(tree);
        }
        Ok(GbdtClassifier { trees, learning_rate: hyper.learning_rate, init_score })
    }

    /// Raw additive score before the logistic link.
    pub fn raw_score(&self, features: &[f64]) -> f64 {
        self.init_score
            + self.learning_rate
                * self
                    .trees
                    .iter()
                    .map(|t| t.predict(features))
                    .sum::<f64>()
    }

    /// Predicted membership confidence in (0, 1).
    pub fn confidence(&self, features: &[f64]) -> f64 {
        sigmoid(self.raw_score(features))
    }
}
