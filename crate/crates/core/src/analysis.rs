//! Redundant-feature grouping and representative selection.
//!
//! Features are compared by a normalized mutual-information distance
//! `1 - I(X;Y) / H(X,Y)` estimated from equal-width histograms, clustered
//! with DBSCAN over the precomputed distances, and each cluster is reduced
//! to the member with the lowest weighted memory/convergence/reuse cost.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::features::{Column, FeatureMatrix};

pub const DEFAULT_BINS: usize = 64;
pub const DEFAULT_EPS: f64 = 0.3;
pub const DEFAULT_MIN_PTS: usize = 1;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("need at least 2 rows to estimate mutual information, got {0}")]
    InsufficientSamples(usize),
}

/// Pairwise distances over a subset of matrix columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    /// Column indices of the source matrix, one per row of `d`.
    pub columns: Vec<usize>,
    pub d: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

fn discretize(values: &[f64], bins: usize) -> (Vec<usize>, usize) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi <= lo {
        return (vec![0; values.len()], 1);
    }
    let width = hi - lo;
    let codes = values
        .iter()
        .map(|&v| (((v - lo) / width * bins as f64) as usize).min(bins - 1))
        .collect();
    (codes, bins)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Distance between two discretized columns; both constant gives 1 unless
/// they are the same column.
fn code_distance(a: &(Vec<usize>, usize), b: &(Vec<usize>, usize)) -> f64 {
    let n = a.0.len() as f64;
    let mut joint = vec![0usize; a.1 * b.1];
    let mut ca = vec![0usize; a.1];
    let mut cb = vec![0usize; b.1];
    for (&x, &y) in a.0.iter().zip(&b.0) {
        joint[x * b.1 + y] += 1;
        ca[x] += 1;
        cb[y] += 1;
    }
    let h_joint = entropy(joint.into_iter(), n);
    if h_joint <= 0.0 {
        return 1.0;
    }
    let mi = entropy(ca.into_iter(), n) + entropy(cb.into_iter(), n) - h_joint;
    (1.0 - mi / h_joint).clamp(0.0, 1.0)
}

pub fn mi_distance_matrix(x: &FeatureMatrix, columns: &[usize]) -> Result<DistanceMatrix, AnalysisError> {
    mi_distance_matrix_with_bins(x, columns, DEFAULT_BINS)
}

pub fn mi_distance_matrix_with_bins(
    x: &FeatureMatrix,
    columns: &[usize],
    bins: usize,
) -> Result<DistanceMatrix, AnalysisError> {
    if x.n_rows() < 2 {
        return Err(AnalysisError::InsufficientSamples(x.n_rows()));
    }
    let codes: Vec<_> = columns.iter().map(|&j| discretize(x.column(j), bins)).collect();
    let k = columns.len();
    let mut d = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = code_distance(&codes[i], &codes[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(DistanceMatrix {
        columns: columns.to_vec(),
        d,
    })
}

/// Clusters of column indices. Every input column appears in exactly one
/// group; groups are ordered by their first member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroups {
    pub groups: Vec<Vec<usize>>,
}

impl FeatureGroups {
    /// Drops columns that fail `keep` and removes groups left empty.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> FeatureGroups {
        FeatureGroups {
            groups: self
                .groups
                .iter()
                .map(|g| g.iter().copied().filter(|&c| keep(c)).collect::<Vec<_>>())
                .filter(|g| !g.is_empty())
                .collect(),
        }
    }
}

/// DBSCAN over a precomputed distance matrix. Points within `eps` are
/// neighbors (a point is its own neighbor); noise points become singletons.
pub fn dbscan_cluster(d: &DistanceMatrix, eps: f64, min_pts: usize) -> FeatureGroups {
    const UNSEEN: usize = usize::MAX;
    let n = d.len();
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| d.d[i][j] <= eps).collect()).collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts.max(1)).collect();
    let mut cluster = vec![UNSEEN; n];
    let mut next = 0;
    for start in 0..n {
        if cluster[start] != UNSEEN || !core[start] {
            continue;
        }
        let id = next;
        next += 1;
        cluster[start] = id;
        let mut frontier = vec![start];
        while let Some(p) = frontier.pop() {
            for &q in &neighbors[p] {
                if cluster[q] == UNSEEN {
                    cluster[q] = id;
                    if core[q] {
                        frontier.push(q);
                    }
                }
            }
        }
    }
    for c in cluster.iter_mut().filter(|c| **c == UNSEEN) {
        *c = next;
        next += 1;
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); next];
    for (i, &c) in cluster.iter().enumerate() {
        groups[c].push(d.columns[i]);
    }
    groups.retain(|g| !g.is_empty());
    groups.sort_by_key(|g| g[0]);
    FeatureGroups { groups }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffWeights {
    pub w_m: f64,
    pub w_c: f64,
    pub w_d: f64,
    pub model_index: usize,
}

/// Linear decay from (1, 1, 0.5) at the first model to zero at `horizon`.
pub fn weight_schedule(model_index: usize, horizon: usize) -> TradeoffWeights {
    assert!(horizon >= 1, "horizon must be at least 1");
    let w = (1.0 - model_index as f64 / horizon as f64).max(0.0);
    TradeoffWeights {
        w_m: w,
        w_c: w,
        w_d: 0.5 * w,
        model_index,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffMetrics {
    /// Bits of per-flow memory.
    pub m_m: f64,
    /// Packets until the value settles.
    pub m_c: f64,
    /// 0 if an earlier model already stores this feature, else 1.
    pub m_d: f64,
}

pub fn tradeoff_metrics(column: &Column, previously_used: bool) -> TradeoffMetrics {
    TradeoffMetrics {
        m_m: column.memory_cost() as f64,
        m_c: column.convergence_cost() as f64,
        m_d: if previously_used { 0.0 } else { 1.0 },
    }
}

fn normalize(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    for v in values.iter_mut() {
        *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
    }
}

/// Weighted normalized cost of every member of `group`, in group order.
pub fn group_scores(group: &[usize], columns: &[Column], weights: &TradeoffWeights, used: &BTreeSet<Column>) -> Vec<f64> {
    let metrics: Vec<TradeoffMetrics> = group
        .iter()
        .map(|&c| tradeoff_metrics(&columns[c], used.contains(&columns[c])))
        .collect();
    let mut m: Vec<f64> = metrics.iter().map(|t| t.m_m).collect();
    let mut c: Vec<f64> = metrics.iter().map(|t| t.m_c).collect();
    let mut d: Vec<f64> = metrics.iter().map(|t| t.m_d).collect();
    normalize(&mut m);
    normalize(&mut c);
    normalize(&mut d);
    (0..group.len())
        .map(|i| weights.w_m * m[i] + weights.w_c * c[i] + weights.w_d * d[i])
        .collect()
}

/// One column per group: the lowest weighted cost, ties to the lower index.
pub fn select_representatives(
    groups: &FeatureGroups,
    columns: &[Column],
    weights: &TradeoffWeights,
    used: &BTreeSet<Column>,
) -> Vec<usize> {
    let mut reps: Vec<usize> = groups
        .groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let scores = group_scores(g, columns, weights, used);
            let mut best = 0;
            for i in 1..g.len() {
                if scores[i] < scores[best] || (scores[i] == scores[best] && g[i] < g[best]) {
                    best = i;
                }
            }
            g[best]
        })
        .collect();
    reps.sort_unstable();
    reps
}
