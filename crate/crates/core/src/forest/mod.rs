//! Random forests of CART trees with weighted Gini splits.
//!
//! Trees are grown in parallel; each tree draws from its own ChaCha stream
//! seeded from `(seed, tree index)`, so results do not depend on the
//! thread schedule.

mod cv;
mod importance;
mod metrics;
mod tree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{Column, FeatureMatrix};

pub use cv::{grid_search, stratified_cv, stratified_folds, GridResult, DEFAULT_FOLDS};
pub use importance::{mdi_importance, rank_features, select_min_features, MinFeatures};
pub use metrics::{accuracy, f1_macro};
pub use tree::{train_tree, DecisionTree, TreeNode};

#[derive(Debug, thiserror::Error)]
pub enum ForestError {
    #[error("no training samples")]
    EmptyInput,
    #[error("feature `{0}` is undefined or missing")]
    UndefinedFeature(String),
    #[error("length mismatch: {0} labels vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("class {class} has only {count} samples, need at least 2")]
    TooFewSamples { class: usize, count: usize },
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeights {
    Uniform,
    /// `n / (k * count_c)`, the usual balanced weighting.
    InverseFrequency,
    Explicit(Vec<f64>),
}

impl ClassWeights {
    pub fn resolve(&self, y: &[usize], n_classes: usize) -> Vec<f64> {
        match self {
            ClassWeights::Uniform => vec![1.0; n_classes],
            ClassWeights::InverseFrequency => {
                let mut counts = vec![0usize; n_classes];
                for &c in y {
                    counts[c] += 1;
                }
                let present = counts.iter().filter(|&&c| c > 0).count().max(1);
                counts
                    .iter()
                    .map(|&c| if c == 0 { 1.0 } else { y.len() as f64 / (present * c) as f64 })
                    .collect()
            }
            ClassWeights::Explicit(w) => {
                let mut w = w.clone();
                w.resize(n_classes, 1.0);
                w
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub class_weights: ClassWeights,
    /// Features examined per split; `None` means `ceil(sqrt(#features))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 16,
            max_depth: 8,
            class_weights: ClassWeights::Uniform,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn features_per_split_for(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }

    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidParams("n_trees must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(ForestError::InvalidParams("max_depth must be at least 1".into()));
        }
        if let ClassWeights::Explicit(w) = &self.class_weights {
            if w.iter().any(|&v| !(v > 0.0)) {
                return Err(ForestError::InvalidParams("class weights must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Builds the grid of depths x tree counts x class weightings, in that
/// nesting order.
pub fn param_grid(depths: &[usize], trees: &[usize], weights: &[ClassWeights], seed: u64) -> Vec<ForestParams> {
    let mut grid = Vec::new();
    for &max_depth in depths {
        for &n_trees in trees {
            for w in weights {
                grid.push(ForestParams {
                    n_trees,
                    max_depth,
                    class_weights: w.clone(),
                    seed,
                    ..ForestParams::default()
                });
            }
        }
    }
    grid
}

/// SplitMix64 step, used to derive independent seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    /// Input columns, in the order tree feature indices refer to.
    pub columns: Vec<Column>,
    pub n_classes: usize,
    pub params: ForestParams,
    pub trees: Vec<DecisionTree>,
}

/// Majority label (ties to the smaller id) and the mean certainty of the
/// trees that voted for it.
pub fn aggregate_votes(votes: &[(usize, f64)], n_classes: usize) -> (usize, f64) {
    assert!(!votes.is_empty(), "at least one vote");
    let mut counts = vec![0usize; n_classes.max(1)];
    let mut sums = vec![0.0; n_classes.max(1)];
    for &(label, cert) in votes {
        counts[label] += 1;
        sums[label] += cert;
    }
    let mut best = 0;
    for c in 1..counts.len() {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    (best, sums[best] / counts[best] as f64)
}

impl RandomForest {
    /// Trains on every column of `x`, all of which must be defined.
    pub fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, params: &ForestParams) -> Result<Self, ForestError> {
        params.validate()?;
        if x.n_rows() == 0 || x.n_cols() == 0 {
            return Err(ForestError::EmptyInput);
        }
        if y.len() != x.n_rows() {
            return Err(ForestError::LengthMismatch(y.len(), x.n_rows()));
        }
        if let Some(j) = (0..x.n_cols()).find(|&j| !x.defined[j]) {
            return Err(ForestError::UndefinedFeature(x.columns[j].to_string()));
        }
        let views: Vec<&[f64]> = (0..x.n_cols()).map(|j| x.column(j)).collect();
        let class_w = params.class_weights.resolve(y, n_classes);
        let n = y.len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, t as u64));
                let mut weights: Vec<f64> = if params.bootstrap {
                    let mut counts = vec![0u32; n];
                    for _ in 0..n {
                        counts[rng.gen_range(0..n)] += 1;
                    }
                    counts.into_iter().map(f64::from).collect()
                } else {
                    vec![1.0; n]
                };
                for (w, &c) in weights.iter_mut().zip(y) {
                    *w *= class_w[c];
                }
                train_tree(&views, y, &weights, n_classes, params, &mut rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RandomForest {
            columns: x.columns.clone(),
            n_classes,
            params: params.clone(),
            trees,
        })
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(|t| t.depth).max().unwrap_or(0)
    }

    pub fn tree_votes(&self, row: &[f64]) -> Vec<(usize, f64)> {
        self.trees.iter().map(|t| t.predict(row)).collect()
    }

    /// `row` is aligned with `self.columns`.
    pub fn predict(&self, row: &[f64]) -> (usize, f64) {
        aggregate_votes(&self.tree_votes(row), self.n_classes)
    }

    /// Positions of this forest's columns inside `x`, failing if any is
    /// missing or undefined there.
    pub fn column_map(&self, x: &FeatureMatrix) -> Result<Vec<usize>, ForestError> {
        self.columns
            .iter()
            .map(|c| {
                x.column_index(c)
                    .filter(|&j| x.defined[j])
                    .ok_or_else(|| ForestError::UndefinedFeature(c.to_string()))
            })
            .collect()
    }

    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<(usize, f64)>, ForestError> {
        let map = self.column_map(x)?;
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|i| {
                let row: Vec<f64> = map.iter().map(|&j| x.value(i, j)).collect();
                self.predict(&row)
            })
            .collect())
    }

    /// F1-macro of this forest on `x`; 0 if `x` lacks one of its features.
    pub fn score(&self, x: &FeatureMatrix, y: &[usize]) -> f64 {
        match self.predict_matrix(x) {
            Ok(pred) => {
                let labels: Vec<usize> = pred.into_iter().map(|(l, _)| l).collect();
                f1_macro(y, &labels, self.n_classes).unwrap_or(0.0)
            }
            Err(_) => 0.0,
        }
    }
}
