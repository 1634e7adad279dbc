use super::{stratified_cv, ForestError, ForestParams, RandomForest, TreeNode};
use crate::features::FeatureMatrix;

/// Mean decrease in impurity per input column, averaged over trees and
/// normalized to sum to 1 (all zeros if no tree splits).
pub fn mdi_importance(forest: &RandomForest) -> Vec<f64> {
    let k = forest.columns.len();
    let mut total = vec![0.0; k];
    for tree in &forest.trees {
        let root_w = tree.root.weight();
        if root_w <= 0.0 {
            continue;
        }
        let mut per_tree = vec![0.0; k];
        tree.walk(|node, _| {
            if let TreeNode::Split {
                feature,
                weight,
                impurity,
                left,
                right,
                ..
            } = node
            {
                let decrease = weight * impurity - left.weight() * left.impurity() - right.weight() * right.impurity();
                per_tree[*feature] += decrease.max(0.0) / root_w;
            }
        });
        for (t, v) in total.iter_mut().zip(per_tree) {
            *t += v;
        }
    }
    let sum: f64 = total.iter().sum();
    if sum > 0.0 {
        for v in &mut total {
            *v /= sum;
        }
    }
    total
}

/// Column indices by descending importance, ties to the lower index.
pub fn rank_features(importance: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..importance.len()).collect();
    order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone)]
pub struct MinFeatures {
    /// Selected columns of the input matrix, ascending.
    pub columns: Vec<usize>,
    pub forest: RandomForest,
    pub score: f64,
    /// False when no prefix of the ranking reached the threshold.
    pub reached: bool,
}

/// Tries the top-1, top-2, ... columns of `ranking` and stops at the first
/// prefix whose CV score is at least `thr_s`.
pub fn select_min_features(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    params: &ForestParams,
    ranking: &[usize],
    thr_s: f64,
    k: usize,
) -> Result<MinFeatures, ForestError> {
    if ranking.is_empty() {
        return Err(ForestError::EmptyInput);
    }
    let mut last = None;
    for n in 1..=ranking.len() {
        let mut cols = ranking[..n].to_vec();
        cols.sort_unstable();
        let sub = x.select_columns(&cols);
        let score = stratified_cv(&sub, y, n_classes, params, k)?;
        if score >= thr_s {
            let forest = RandomForest::fit(&sub, y, n_classes, params)?;
            return Ok(MinFeatures {
                columns: cols,
                forest,
                score,
                reached: true,
            });
        }
        last = Some((cols, sub, score));
    }
    let (cols, sub, score) = last.expect("ranking non-empty");
    let forest = RandomForest::fit(&sub, y, n_classes, params)?;
    Ok(MinFeatures {
        columns: cols,
        forest,
        score,
        reached: false,
    })
}
