//! Turns a trained classifier into what a switch needs: fixed-point specs
//! per feature, a packed per-flow register layout, one match&action table
//! per tree level, and the packet-count → model mapping.

mod layout;
mod quant;
mod tables;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::features::{Column, FeatureId, FeatureVector};
use crate::trainer::{Classifier, SCHEMA_VERSION};

pub use layout::{BitLayout, BitString, FieldEncoding, LayoutField, ARRIVAL_BITS};
pub use quant::{quantize_spec, quantize_threshold, quantize_value, QuantSpec, MAX_FIELD_BITS};
pub use tables::{
    aggregate_quantized, compile_tree, predict_tree_quantized, quantize_certainty, MissingEntry, TableAction,
    TableEntry, TreeTables,
};

pub const DEFAULT_ACCURACY: f64 = 0.01;
/// Flow id (32) plus last-packet timestamp (17).
pub const ROW_BASE_BITS: u32 = 49;
pub const ROW_COUNT_BITS: u32 = 7;

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error("model {model} needs {required} {dimension}, hardware allows {limit}")]
    HardwareLimitExceeded {
        dimension: &'static str,
        model: usize,
        required: usize,
        limit: usize,
    },
    #[error("tree depth {depth} exceeds the model depth {max}")]
    DepthExceeded { depth: usize, max: usize },
    #[error("classifier has no models")]
    EmptyClassifier,
    #[error("comparison accuracy must be positive, got {0}")]
    InvalidAccuracy(f64),
    #[error("malformed deployment config: {0}")]
    MalformedConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareLimits {
    pub max_trees: usize,
    pub max_depth: usize,
    /// Sequential tables available; a model of depth `d` needs `d + 1`.
    pub stages: usize,
}

impl Default for HardwareLimits {
    fn default() -> Self {
        HardwareLimits {
            max_trees: 32,
            max_depth: 20,
            stages: 21,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompileOptions {
    pub accuracy: f64,
    pub hardware: HardwareLimits,
    /// Overrides the classifier's certainty threshold.
    pub thr_c: Option<f64>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            accuracy: DEFAULT_ACCURACY,
            hardware: HardwareLimits::default(),
            thr_c: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledModel {
    /// Index of the classifier model this was compiled from.
    pub source: usize,
    pub levels: usize,
    /// For each forest column, its quantization slot (`None` if no tree
    /// splits on it).
    pub slots: Vec<Option<usize>>,
    pub trees: Vec<TreeTables>,
}

impl CompiledModel {
    pub fn entry_count(&self) -> usize {
        self.trees.iter().map(TreeTables::entry_count).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchEntry {
    pub from_count: usize,
    /// Index into the compiled models.
    pub model: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub base_bits: u32,
    pub count_bits: u32,
    pub feature_bits: u32,
    pub row_bits: u32,
    pub flows_per_10mb: u64,
}

impl MemoryReport {
    pub fn for_layout(feature_bits: u32) -> Self {
        let row_bits = ROW_BASE_BITS + ROW_COUNT_BITS + feature_bits;
        MemoryReport {
            base_bits: ROW_BASE_BITS,
            count_bits: ROW_COUNT_BITS,
            feature_bits,
            row_bits,
            flows_per_10mb: 80_000_000 / row_bits as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentConfig {
    pub schema_version: u32,
    pub classes: Vec<String>,
    pub thr_s: f64,
    pub thr_c: f64,
    /// `ceil(thr_c * 255)`; values above 255 disable classification.
    pub thr_c_q: u32,
    pub accuracy: f64,
    pub hardware: HardwareLimits,
    pub quant: Vec<QuantSpec>,
    pub layout: BitLayout,
    pub models: Vec<CompiledModel>,
    pub model_switch: Vec<SwitchEntry>,
    pub memory: MemoryReport,
}

fn check(dimension: &'static str, model: usize, required: usize, limit: usize) -> Result<(), CompileError> {
    if required > limit {
        Err(CompileError::HardwareLimitExceeded {
            dimension,
            model,
            required,
            limit,
        })
    } else {
        Ok(())
    }
}

pub fn quantize_certainty_threshold(thr_c: f64) -> u32 {
    (thr_c.max(0.0) * 255.0).ceil() as u32
}

pub fn compile_classifier(clf: &Classifier, options: &CompileOptions) -> Result<DeploymentConfig, CompileError> {
    if clf.models.is_empty() {
        return Err(CompileError::EmptyClassifier);
    }
    if !(options.accuracy > 0.0) {
        return Err(CompileError::InvalidAccuracy(options.accuracy));
    }
    let hw = &options.hardware;
    let unique = clf.unique_models();
    for &m in &unique {
        let forest = &clf.models[m].forest;
        check("trees", m, forest.trees.len(), hw.max_trees)?;
        check("depth", m, forest.max_depth(), hw.max_depth)?;
        check("stages", m, forest.max_depth() + 1, hw.stages)?;
    }

    let mut thresholds: BTreeMap<Column, Vec<f64>> = BTreeMap::new();
    for &m in &unique {
        let forest = &clf.models[m].forest;
        for tree in &forest.trees {
            tree.walk(|node, _| {
                if let crate::forest::TreeNode::Split { feature, threshold, .. } = node {
                    thresholds.entry(forest.columns[*feature].clone()).or_default().push(*threshold);
                }
            });
        }
    }
    let quant: Vec<QuantSpec> = thresholds
        .iter()
        .filter_map(|(c, t)| quantize_spec(c, t, options.accuracy))
        .collect();
    let layout = BitLayout::from_specs(&quant);

    let mut compiled_index = BTreeMap::new();
    let mut models = Vec::new();
    for &m in &unique {
        let forest = &clf.models[m].forest;
        let slots: Vec<Option<usize>> = forest
            .columns
            .iter()
            .map(|c| quant.iter().position(|s| &s.column == c))
            .collect();
        let flat: Vec<usize> = slots.iter().map(|s| s.unwrap_or(usize::MAX)).collect();
        let depth = forest.max_depth();
        let trees = forest
            .trees
            .iter()
            .map(|t| compile_tree(t, depth, &flat, &quant))
            .collect::<Result<Vec<_>, _>>()?;
        compiled_index.insert(m, models.len());
        models.push(CompiledModel {
            source: m,
            levels: depth + 1,
            slots,
            trees,
        });
    }
    let model_switch = clf
        .models
        .iter()
        .enumerate()
        .map(|(i, m)| SwitchEntry {
            from_count: m.activation_count,
            model: compiled_index[&m.reused_from.unwrap_or(i)],
        })
        .collect();

    let thr_c = options.thr_c.unwrap_or(clf.thr_c);
    Ok(DeploymentConfig {
        schema_version: SCHEMA_VERSION,
        classes: clf.classes.clone(),
        thr_s: clf.thr_s,
        thr_c,
        thr_c_q: quantize_certainty_threshold(thr_c),
        accuracy: options.accuracy,
        hardware: *hw,
        memory: MemoryReport::for_layout(layout.total_bits),
        quant,
        layout,
        models,
        model_switch,
    })
}

impl DeploymentConfig {
    /// Compiled model active after `packet_count` packets.
    pub fn model_for(&self, packet_count: usize) -> Option<usize> {
        self.model_switch
            .iter()
            .rev()
            .find(|e| e.from_count <= packet_count)
            .map(|e| e.model)
    }

    pub fn first_activation(&self) -> Option<usize> {
        self.model_switch.first().map(|e| e.from_count)
    }

    /// Quantized values of every slot for a packet-level feature vector;
    /// undefined and external features read as zero.
    pub fn quantize_vector(&self, v: &FeatureVector) -> Vec<u64> {
        self.quant
            .iter()
            .map(|s| s.column.feature().map_or(0, |f| quantize_value(v.value(f), s)))
            .collect()
    }

    /// Runs every tree of compiled model `model` on quantized slot values.
    pub fn predict(&self, model: usize, q: &[u64]) -> Result<(usize, u8), MissingEntry> {
        let votes = self.models[model]
            .trees
            .iter()
            .map(|t| t.walk(|i| q[i]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(aggregate_quantized(&votes, self.classes.len()))
    }

    pub fn uses_external_columns(&self) -> bool {
        self.quant.iter().any(|s| matches!(s.column, Column::External(_)))
    }

    pub fn uses_feature(&self, f: FeatureId) -> bool {
        self.quant.iter().any(|s| s.column == Column::Packet(f))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CompileError> {
        let config: DeploymentConfig =
            serde_json::from_str(text).map_err(|e| CompileError::MalformedConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CompileError> {
        let bad = |m: String| Err(CompileError::MalformedConfig(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema version {}", self.schema_version));
        }
        if self.model_switch.iter().any(|e| e.model >= self.models.len()) {
            return bad("model switch refers to a missing model".into());
        }
        for field in &self.layout.fields {
            if field.spec.is_some_and(|s| s >= self.quant.len()) || field.offset + field.width > self.layout.total_bits {
                return bad(format!("layout field `{}` out of range", field.name()));
            }
        }
        for (m, model) in self.models.iter().enumerate() {
            for tree in &model.trees {
                if tree.levels.len() != model.levels {
                    return bad(format!("model {m} has a tree with the wrong level count"));
                }
                for e in tree.levels.iter().flatten() {
                    match e.action {
                        TableAction::Split { feature, .. } if feature >= self.quant.len() => {
                            return bad(format!("model {m} refers to missing feature slot {feature}"));
                        }
                        TableAction::Leaf { label, .. } if label >= self.classes.len() => {
                            return bad(format!("model {m} emits unknown class {label}"));
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }

    /// Human-readable entry listing, one line per entry.
    pub fn table_dump(&self) -> String {
        let mut out = String::new();
        for (m, model) in self.models.iter().enumerate() {
            for (t, tree) in model.trees.iter().enumerate() {
                for (l, entries) in tree.levels.iter().enumerate() {
                    for e in entries {
                        let action = match e.action {
                            TableAction::Split { feature, threshold } => {
                                format!("{} > {threshold}", self.quant[feature].column)
                            }
                            TableAction::Leaf { label, certainty } => {
                                format!("leaf {} ({certainty})", self.classes[label])
                            }
                        };
                        let _ = writeln!(
                            out,
                            "model {m} tree {t} level {l}: ({}, {}) -> node {} {action}",
                            e.prev_node, e.prev_result as u8, e.node
                        );
                    }
                }
            }
        }
        out
    }
}
