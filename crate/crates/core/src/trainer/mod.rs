//! Greedy extraction of context-dependent forests.
//!
//! Packet-count contexts are visited in ascending order. At each context
//! the trainer either keeps applying the current forest (while its score
//! stays above `thr_s`), switches back to an earlier forest that scores
//! well, or searches for a new one on representative features and then
//! trims that forest to the fewest features that still clear `thr_s`.

mod evaluate;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, dbscan_cluster, mi_distance_matrix_with_bins, select_representatives, weight_schedule, FeatureGroups,
    TradeoffWeights,
};
use crate::features::{Column, ContextData, ContextDataset, FeatureError};
use crate::forest::{
    grid_search, mdi_importance, param_grid, rank_features, select_min_features, ClassWeights, ForestError,
    ForestParams, RandomForest, DEFAULT_FOLDS,
};

pub use evaluate::{
    evaluate_classifier, evaluate_contexts, ContextEvaluation, EvaluationOptions, EvaluationSummary,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TrainerError {
    #[error("dataset has {0} classes, need at least 2")]
    TooFewClasses(usize),
    #[error("no packet-count context has any flows")]
    NoContexts,
    #[error("no model reached the score threshold {thr_s}")]
    NoModelFound { thr_s: f64, report: Box<TrainingReport> },
    #[error("invalid trainer configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub thr_s: f64,
    pub grid: Vec<ForestParams>,
    pub folds: usize,
    /// Number of models after which the trade-off weights reach zero.
    pub weight_horizon: usize,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub mi_bins: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            thr_s: 0.9,
            grid: default_grid(0),
            folds: DEFAULT_FOLDS,
            weight_horizon: 10,
            dbscan_eps: analysis::DEFAULT_EPS,
            dbscan_min_pts: analysis::DEFAULT_MIN_PTS,
            mi_bins: analysis::DEFAULT_BINS,
        }
    }
}

/// Depths {4, 8} x trees {8, 16} x {uniform, inverse-frequency} weights.
pub fn default_grid(seed: u64) -> Vec<ForestParams> {
    param_grid(&[4, 8], &[8, 16], &[ClassWeights::Uniform, ClassWeights::InverseFrequency], seed)
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        if !(0.0..=f64::MAX).contains(&self.thr_s) {
            return Err(TrainerError::InvalidConfig(format!("thr_s {} is negative", self.thr_s)));
        }
        if self.grid.is_empty() {
            return Err(TrainerError::InvalidConfig("empty parameter grid".into()));
        }
        if self.folds < 2 {
            return Err(TrainerError::InvalidConfig("need at least 2 folds".into()));
        }
        if self.weight_horizon == 0 {
            return Err(TrainerError::InvalidConfig("weight horizon must be at least 1".into()));
        }
        for p in &self.grid {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextModel {
    /// Packet count from which this model is active.
    pub activation_count: usize,
    pub forest: RandomForest,
    pub score_at_extraction: f64,
    /// Index of the earlier model this entry re-activates, if any.
    pub reused_from: Option<usize>,
}

impl ContextModel {
    pub fn features(&self) -> &[Column] {
        &self.forest.columns
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub schema_version: u32,
    pub classes: Vec<String>,
    pub models: Vec<ContextModel>,
    pub thr_s: f64,
    pub thr_c: f64,
}

impl Classifier {
    /// Index of the model active after `packet_count` packets.
    pub fn model_for(&self, packet_count: usize) -> Option<usize> {
        self.models.iter().rposition(|m| m.activation_count <= packet_count)
    }

    /// Models that were trained (not re-activated), in order.
    pub fn unique_models(&self) -> Vec<usize> {
        (0..self.models.len()).filter(|&i| self.models[i].reused_from.is_none()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("classifier serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextOutcome {
    /// A new forest was trained here.
    Extracted,
    /// Model search ran but no forest beat the threshold.
    SearchFailed,
    /// The current forest still scores above the threshold.
    Reapplied,
    /// An earlier forest was re-activated.
    Reused,
    /// Too few samples to cross-validate.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub packet_count: usize,
    pub outcome: ContextOutcome,
    /// Classifier entry active from this context on, if one was added or kept.
    pub model: Option<usize>,
    /// CV score for searches, training-set score for re-application.
    pub score: f64,
    /// Score of the previous forest when it was tried here and dropped.
    pub reapply_score: Option<f64>,
    pub representatives: Vec<String>,
    pub features: Vec<String>,
    pub weights: Option<TradeoffWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub schema_version: u32,
    pub thr_s: f64,
    pub groups: Vec<Vec<String>>,
    pub entries: Vec<ReportEntry>,
}

impl TrainingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("packet_count,outcome,model,score,reapply_score,features\n");
        for e in &self.entries {
            let outcome = serde_json::to_value(e.outcome).expect("enum serializes");
            out.push_str(&format!(
                "{},{},{},{:.6},{},{}\n",
                e.packet_count,
                outcome.as_str().unwrap_or_default(),
                e.model.map(|m| m.to_string()).unwrap_or_default(),
                e.score,
                e.reapply_score.map(|s| format!("{s:.6}")).unwrap_or_default(),
                e.features.join("|"),
            ));
        }
        out
    }
}

/// The best-scoring trained model on `ctx`, restricted to each model's own
/// features. Models using a feature undefined at `ctx` score 0; ties go to
/// the earliest model.
pub fn best_old_rf(models: &[ContextModel], ctx: &ContextData) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, m) in models.iter().enumerate() {
        if m.reused_from.is_some() {
            continue;
        }
        let s = m.forest.score(&ctx.x, &ctx.y);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best
}

/// Redundancy groups over all columns. Columns undefined in the whole-flow
/// data are added as singletons.
pub fn feature_groups(data: &ContextDataset, config: &TrainerConfig) -> Result<FeatureGroups, TrainerError> {
    let full = &data.full.x;
    let defined = full.defined_columns();
    let mut groups = if defined.is_empty() {
        FeatureGroups { groups: Vec::new() }
    } else {
        let d = mi_distance_matrix_with_bins(full, &defined, config.mi_bins)?;
        dbscan_cluster(&d, config.dbscan_eps, config.dbscan_min_pts)
    };
    for j in 0..full.n_cols() {
        if !full.defined[j] {
            groups.groups.push(vec![j]);
        }
    }
    groups.groups.sort_by_key(|g| g[0]);
    Ok(groups)
}

fn names(columns: &[Column], idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&j| columns[j].to_string()).collect()
}

pub fn train_classifier(
    data: &ContextDataset,
    config: &TrainerConfig,
) -> Result<(Classifier, TrainingReport), TrainerError> {
    config.validate()?;
    if data.classes.len() < 2 {
        return Err(TrainerError::TooFewClasses(data.classes.len()));
    }
    let mut contexts: Vec<&ContextData> = data.contexts.iter().filter(|c| c.x.n_rows() > 0).collect();
    contexts.sort_by_key(|c| c.packet_count);
    if contexts.is_empty() {
        return Err(TrainerError::NoContexts);
    }
    let n_classes = data.classes.len();
    let thr = config.thr_s;
    let groups = feature_groups(data, config)?;
    let columns = &data.columns;

    let mut queue: VecDeque<&ContextData> = contexts.into_iter().collect();
    let mut models: Vec<ContextModel> = Vec::new();
    let mut used: BTreeSet<Column> = BTreeSet::new();
    let mut entries: Vec<ReportEntry> = Vec::new();
    let mut dropped_score: Option<f64> = None;

    while !queue.is_empty() {
        let mut found = None;
        while let Some(ctx) = queue.pop_front() {
            let weights = weight_schedule(models.len(), config.weight_horizon);
            let available = groups.restrict(|j| ctx.x.defined[j]);
            let reps = select_representatives(&available, columns, &weights, &used);
            let sub = ctx.x.select_columns(&reps);
            let mut entry = ReportEntry {
                packet_count: ctx.packet_count,
                outcome: ContextOutcome::SearchFailed,
                model: None,
                score: 0.0,
                reapply_score: dropped_score.take(),
                representatives: names(columns, &reps),
                features: Vec::new(),
                weights: Some(weights),
            };
            match grid_search(&sub, &ctx.y, n_classes, &config.grid, config.folds) {
                Ok(g) if g.score > thr => {
                    found = Some((ctx, sub, g, entry));
                    break;
                }
                Ok(g) => {
                    log::info!("p={}: best search score {:.4} <= {thr}", ctx.packet_count, g.score);
                    entry.score = g.score;
                    entries.push(entry);
                }
                Err(ForestError::TooFewSamples { .. } | ForestError::EmptyInput) => {
                    log::warn!("p={}: too few samples, context skipped", ctx.packet_count);
                    entry.outcome = ContextOutcome::Skipped;
                    entries.push(entry);
                }
                Err(e) => return Err(e.into()),
            }
        }
        let Some((ctx, sub, g, mut entry)) = found else {
            break;
        };

        let ranking = rank_features(&mdi_importance(&g.forest));
        let min = select_min_features(&sub, &ctx.y, n_classes, &g.params, &ranking, thr, config.folds)?;
        used.extend(min.forest.columns.iter().cloned());
        let current = models.len();
        log::info!(
            "p={}: model {current} with {:?}, score {:.4}",
            ctx.packet_count,
            min.forest.columns.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
            min.score
        );
        entry.outcome = ContextOutcome::Extracted;
        entry.model = Some(current);
        entry.score = min.score;
        entry.features = min.forest.columns.iter().map(|c| c.to_string()).collect();
        entries.push(entry);
        models.push(ContextModel {
            activation_count: ctx.packet_count,
            forest: min.forest,
            score_at_extraction: min.score,
            reused_from: None,
        });

        let mut active = current;
        let mut active_entry = current;
        while let Some(ctx) = queue.pop_front() {
            let s = models[active].forest.score(&ctx.x, &ctx.y);
            let features: Vec<String> = models[active].features().iter().map(|c| c.to_string()).collect();
            if s > thr {
                entries.push(ReportEntry {
                    packet_count: ctx.packet_count,
                    outcome: ContextOutcome::Reapplied,
                    model: Some(active_entry),
                    score: s,
                    reapply_score: None,
                    representatives: Vec::new(),
                    features,
                    weights: None,
                });
                continue;
            }
            match best_old_rf(&models, ctx) {
                Some((old, s_m)) if s_m > thr => {
                    log::info!("p={}: re-activating model {old} (score {s_m:.4})", ctx.packet_count);
                    active = old;
                    active_entry = models.len();
                    entries.push(ReportEntry {
                        packet_count: ctx.packet_count,
                        outcome: ContextOutcome::Reused,
                        model: Some(active_entry),
                        score: s_m,
                        reapply_score: Some(s),
                        representatives: Vec::new(),
                        features: models[old].features().iter().map(|c| c.to_string()).collect(),
                        weights: None,
                    });
                    models.push(ContextModel {
                        activation_count: ctx.packet_count,
                        forest: models[old].forest.clone(),
                        score_at_extraction: s_m,
                        reused_from: Some(old),
                    });
                }
                _ => {
                    dropped_score = Some(s);
                    queue.push_front(ctx);
                    break;
                }
            }
        }
    }

    let report = TrainingReport {
        schema_version: SCHEMA_VERSION,
        thr_s: thr,
        groups: groups.groups.iter().map(|g| names(columns, g)).collect(),
        entries,
    };
    if models.is_empty() {
        return Err(TrainerError::NoModelFound {
            thr_s: thr,
            report: Box::new(report),
        });
    }
    Ok((
        Classifier {
            schema_version: SCHEMA_VERSION,
            classes: data.classes.clone(),
            models,
            thr_s: thr,
            thr_c: 0.0,
        },
        report,
    ))
}
