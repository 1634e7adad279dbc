use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ForestError, ForestParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    /// Samples with `value > threshold` go right.
    Split {
        feature: usize,
        threshold: f64,
        weight: f64,
        impurity: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        label: usize,
        certainty: f64,
        support: usize,
        weight: f64,
        impurity: f64,
    },
}

impl TreeNode {
    pub fn weight(&self) -> f64 {
        match self {
            TreeNode::Split { weight, .. } | TreeNode::Leaf { weight, .. } => *weight,
        }
    }

    pub fn impurity(&self) -> f64 {
        match self {
            TreeNode::Split { impurity, .. } | TreeNode::Leaf { impurity, .. } => *impurity,
        }
    }

    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub depth: usize,
}

impl DecisionTree {
    pub fn from_root(root: TreeNode) -> Self {
        let depth = root.depth();
        DecisionTree { root, depth }
    }

    /// Walks from the root to a leaf and returns its label and certainty.
    pub fn predict(&self, row: &[f64]) -> (usize, f64) {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { label, certainty, .. } => return (*label, *certainty),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => node = if row[*feature] > *threshold { right } else { left },
            }
        }
    }

    /// Visits every node with its depth, parents before children.
    pub fn walk(&self, mut f: impl FnMut(&TreeNode, usize)) {
        let mut stack = vec![(&self.root, 0)];
        while let Some((node, d)) = stack.pop() {
            f(node, d);
            if let TreeNode::Split { left, right, .. } = node {
                stack.push((right, d + 1));
                stack.push((left, d + 1));
            }
        }
    }

    pub fn features_used(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.walk(|n, _| {
            if let TreeNode::Split { feature, .. } = n {
                out.push(*feature);
            }
        });
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn gini(class_weight: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - class_weight.iter().map(|w| (w / total) * (w / total)).sum::<f64>()
}

struct Builder<'a, R: Rng> {
    columns: &'a [&'a [f64]],
    y: &'a [usize],
    weights: &'a [f64],
    n_classes: usize,
    max_depth: usize,
    features_per_split: usize,
    rng: &'a mut R,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    child_impurity: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn class_weights(&self, idx: &[usize]) -> Vec<f64> {
        let mut cw = vec![0.0; self.n_classes];
        for &i in idx {
            cw[self.y[i]] += self.weights[i];
        }
        cw
    }

    fn leaf(&self, idx: &[usize], cw: &[f64], total: f64, impurity: f64) -> TreeNode {
        let mut label = 0;
        for c in 1..cw.len() {
            if cw[c] > cw[label] {
                label = c;
            }
        }
        TreeNode::Leaf {
            label,
            certainty: if total > 0.0 { cw[label] / total } else { 0.0 },
            support: idx.len(),
            weight: total,
            impurity,
        }
    }

    /// Best threshold on one feature, or `None` if the feature is constant
    /// over `idx`.
    fn scan_feature(&self, feature: usize, idx: &[usize], total_cw: &[f64]) -> Option<(f64, f64)> {
        let col = self.columns[feature];
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        if col[order[0]] == col[order[order.len() - 1]] {
            return None;
        }
        let total: f64 = total_cw.iter().sum();
        let mut left = vec![0.0; self.n_classes];
        let mut left_w = 0.0;
        let mut best: Option<(f64, f64)> = None;
        for k in 0..order.len() - 1 {
            let i = order[k];
            left[self.y[i]] += self.weights[i];
            left_w += self.weights[i];
            let (v, next) = (col[i], col[order[k + 1]]);
            if v == next {
                continue;
            }
            let right: Vec<f64> = total_cw.iter().zip(&left).map(|(t, l)| t - l).collect();
            let right_w = total - left_w;
            let child = left_w * gini(&left, left_w) + right_w * gini(&right, right_w);
            if best.is_none_or(|(b, _)| child < b) {
                let mut threshold = v + (next - v) / 2.0;
                // guard against midpoint rounding onto the upper value
                if threshold >= next {
                    threshold = v;
                }
                best = Some((child, threshold));
            }
        }
        best
    }

    fn find_split(&mut self, idx: &[usize], cw: &[f64]) -> Option<BestSplit> {
        let mut features: Vec<usize> = (0..self.columns.len()).collect();
        features.shuffle(self.rng);
        let mut evaluated = 0;
        let mut best: Option<BestSplit> = None;
        for f in features {
            if evaluated >= self.features_per_split {
                break;
            }
            let Some((child, threshold)) = self.scan_feature(f, idx, cw) else {
                continue;
            };
            evaluated += 1;
            if best.as_ref().is_none_or(|b| child < b.child_impurity) {
                best = Some(BestSplit {
                    feature: f,
                    threshold,
                    child_impurity: child,
                });
            }
        }
        best
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> TreeNode {
        let cw = self.class_weights(&idx);
        let total: f64 = cw.iter().sum();
        let impurity = gini(&cw, total);
        if depth >= self.max_depth || impurity <= 0.0 || idx.len() < 2 {
            return self.leaf(&idx, &cw, total, impurity);
        }
        let Some(split) = self.find_split(&idx, &cw) else {
            return self.leaf(&idx, &cw, total, impurity);
        };
        let col = self.columns[split.feature];
        let (right_idx, left_idx): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| col[i] > split.threshold);
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            weight: total,
            impurity,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Grows one CART tree on weighted samples. Samples with zero weight are
/// ignored. Columns are given column-major.
pub fn train_tree<R: Rng>(
    columns: &[&[f64]],
    y: &[usize],
    sample_weights: &[f64],
    n_classes: usize,
    params: &ForestParams,
    rng: &mut R,
) -> Result<DecisionTree, ForestError> {
    let idx: Vec<usize> = (0..y.len()).filter(|&i| sample_weights[i] > 0.0).collect();
    if idx.is_empty() || columns.is_empty() {
        return Err(ForestError::EmptyInput);
    }
    let mut builder = Builder {
        columns,
        y,
        weights: sample_weights,
        n_classes,
        max_depth: params.max_depth,
        features_per_split: params.features_per_split_for(columns.len()),
        rng,
    };
    Ok(DecisionTree::from_root(builder.build(idx, 0)))
}
