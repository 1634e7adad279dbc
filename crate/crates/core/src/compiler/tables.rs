use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::quant::{quantize_threshold, QuantSpec};
use super::CompileError;
use crate::forest::{DecisionTree, TreeNode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TableAction {
    /// Compare quantized feature `feature` (an index into the deployment's
    /// quantization list) against `threshold`; `>` takes the right child.
    Split { feature: usize, threshold: u64 },
    Leaf { label: usize, certainty: u8 },
}

/// One match&action entry: matches the node id and comparison result of
/// the previous level and assigns this node's id at the current level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub prev_node: u32,
    pub prev_result: bool,
    pub node: u32,
    pub action: TableAction,
}

/// Tables of one tree, one per level. Every tree of a model has the same
/// number of levels; shorter paths are padded with leaf pass-through
/// entries keyed on `(leaf id, false)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeTables {
    pub levels: Vec<Vec<TableEntry>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MissingEntry {
    pub level: usize,
    pub node: u32,
    pub result: bool,
}

impl TreeTables {
    pub fn entry_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Level-by-level evaluation. `feature(i)` returns the quantized value
    /// of quantization slot `i`.
    pub fn walk(&self, feature: impl Fn(usize) -> u64) -> Result<(usize, u8), MissingEntry> {
        let (mut node, mut result) = (0u32, false);
        let mut out = None;
        for (level, entries) in self.levels.iter().enumerate() {
            let e = entries
                .iter()
                .find(|e| e.prev_node == node && e.prev_result == result)
                .ok_or(MissingEntry { level, node, result })?;
            node = e.node;
            match e.action {
                TableAction::Split { feature: f, threshold } => {
                    result = feature(f) > threshold;
                    out = None;
                }
                TableAction::Leaf { label, certainty } => {
                    result = false;
                    out = Some((label, certainty));
                }
            }
        }
        out.ok_or(MissingEntry {
            level: self.levels.len(),
            node,
            result,
        })
    }
}

pub fn quantize_certainty(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

enum Pending<'a> {
    Node(&'a TreeNode),
    Carry { label: usize, certainty: u8 },
}

/// Compiles `tree` into `levels = model_max_depth + 1` tables. `slots[j]`
/// maps the tree's feature index `j` to a position in `specs`.
pub fn compile_tree(
    tree: &DecisionTree,
    model_max_depth: usize,
    slots: &[usize],
    specs: &[QuantSpec],
) -> Result<TreeTables, CompileError> {
    if tree.depth > model_max_depth {
        return Err(CompileError::DepthExceeded {
            depth: tree.depth,
            max: model_max_depth,
        });
    }
    let mut levels = Vec::with_capacity(model_max_depth + 1);
    let mut frontier: VecDeque<((u32, bool), Pending)> = VecDeque::from([((0, false), Pending::Node(&tree.root))]);
    for _ in 0..=model_max_depth {
        let mut entries = Vec::with_capacity(frontier.len());
        let mut next = VecDeque::new();
        for (id, ((prev_node, prev_result), item)) in frontier.into_iter().enumerate() {
            let node = id as u32;
            let action = match item {
                Pending::Node(TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                }) => {
                    let slot = slots[*feature];
                    next.push_back(((node, false), Pending::Node(left)));
                    next.push_back(((node, true), Pending::Node(right)));
                    TableAction::Split {
                        feature: slot,
                        threshold: quantize_threshold(*threshold, &specs[slot]),
                    }
                }
                Pending::Node(TreeNode::Leaf { label, certainty, .. }) => {
                    let certainty = quantize_certainty(*certainty);
                    next.push_back((
                        (node, false),
                        Pending::Carry {
                            label: *label,
                            certainty,
                        },
                    ));
                    TableAction::Leaf {
                        label: *label,
                        certainty,
                    }
                }
                Pending::Carry { label, certainty } => {
                    next.push_back(((node, false), Pending::Carry { label, certainty }));
                    TableAction::Leaf { label, certainty }
                }
            };
            entries.push(TableEntry {
                prev_node,
                prev_result,
                node,
                action,
            });
        }
        levels.push(entries);
        frontier = next;
    }
    Ok(TreeTables { levels })
}

/// Direct traversal with quantized thresholds; the reference the tables
/// must reproduce.
pub fn predict_tree_quantized(
    tree: &DecisionTree,
    slots: &[usize],
    specs: &[QuantSpec],
    feature: impl Fn(usize) -> u64,
) -> (usize, u8) {
    let mut node = &tree.root;
    loop {
        match node {
            TreeNode::Leaf { label, certainty, .. } => return (*label, quantize_certainty(*certainty)),
            TreeNode::Split {
                feature: j,
                threshold,
                left,
                right,
                ..
            } => {
                let slot = slots[*j];
                node = if feature(slot) > quantize_threshold(*threshold, &specs[slot]) {
                    right
                } else {
                    left
                };
            }
        }
    }
}

/// Majority label (ties to the smaller id) and the floor of the mean
/// certainty of the trees that voted for it.
pub fn aggregate_quantized(votes: &[(usize, u8)], n_classes: usize) -> (usize, u8) {
    assert!(!votes.is_empty(), "at least one vote");
    let mut counts = vec![0u32; n_classes.max(1)];
    let mut sums = vec![0u32; n_classes.max(1)];
    for &(label, c) in votes {
        counts[label] += 1;
        sums[label] += c as u32;
    }
    let mut best = 0;
    for c in 1..counts.len() {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    (best, (sums[best] / counts[best]) as u8)
}
