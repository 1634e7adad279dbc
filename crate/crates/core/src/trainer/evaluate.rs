use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Classifier, TrainerError, SCHEMA_VERSION};
use crate::features::{fold_packets, Column, ContextDataset, FeatureId, FeatureVector, COUNTER_MAX};
use crate::forest::f1_macro;
use crate::traffic::LabeledDataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOptions {
    /// Minimum certainty for a prediction to be accepted.
    pub thr_c: f64,
    /// Apply the first model to flows that end before it activates, using
    /// the features after their last packet.
    pub classify_short_flows: bool,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        EvaluationOptions {
            thr_c: 0.0,
            classify_short_flows: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEvaluation {
    pub packet_count: usize,
    pub model: Option<usize>,
    /// Flows still unclassified that reached this packet count.
    pub attempted: usize,
    pub classified: usize,
    pub classified_pct: f64,
    pub cumulative_classified: usize,
    pub cumulative_pct: f64,
    /// F1-macro over every flow classified up to here.
    pub cumulative_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub schema_version: u32,
    pub thr_c: f64,
    pub total_flows: usize,
    /// Flows with fewer packets than the first model needs.
    pub too_short: usize,
    pub too_short_pct: f64,
    pub classified: usize,
    pub classified_pct: f64,
    /// Short flows classified after they ended (only with the option set).
    pub classified_short: usize,
    pub f1_classified: f64,
    pub contexts: Vec<ContextEvaluation>,
}

/// Values of `columns` from a packet-level feature vector, or `None` if
/// any is undefined or not a packet feature.
pub fn vector_row(columns: &[Column], v: &FeatureVector) -> Option<Vec<f64>> {
    columns
        .iter()
        .map(|c| c.feature().and_then(|f| v.get(f)).map(|x| x as f64))
        .collect()
}

struct FlowOutcome {
    /// Packet count at which the flow was classified, and the label.
    classified: Option<(usize, usize)>,
    short: bool,
    short_classified: bool,
    truth: usize,
    /// Longest prefix the flow offers (clamped like the packet counter).
    reach: usize,
}

fn pct(n: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * n as f64 / total as f64
    }
}

fn summarize(clf: &Classifier, outcomes: &[FlowOutcome], thr_c: f64, counts: &[usize]) -> EvaluationSummary {
    let n_classes = clf.classes.len();
    let total = outcomes.len();
    let mut contexts = Vec::new();
    let mut cumulative = 0;
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for &c in counts {
        let attempted = outcomes
            .iter()
            .filter(|o| o.reach >= c && o.classified.is_none_or(|(at, _)| at >= c) && !o.short_classified)
            .count();
        let newly: Vec<&FlowOutcome> = outcomes
            .iter()
            .filter(|o| !o.short_classified && o.classified.is_some_and(|(at, _)| at == c))
            .collect();
        cumulative += newly.len();
        for o in &newly {
            truth.push(o.truth);
            pred.push(o.classified.expect("classified").1);
        }
        contexts.push(ContextEvaluation {
            packet_count: c,
            model: clf.model_for(c),
            attempted: if clf.model_for(c).is_some() { attempted } else { 0 },
            classified: newly.len(),
            classified_pct: pct(newly.len(), total),
            cumulative_classified: cumulative,
            cumulative_pct: pct(cumulative, total),
            cumulative_f1: if truth.is_empty() { 0.0 } else { f1_macro(&truth, &pred, n_classes).unwrap_or(0.0) },
        });
    }
    let all: Vec<(usize, usize)> = outcomes
        .iter()
        .filter_map(|o| o.classified.map(|(_, l)| (o.truth, l)))
        .collect();
    let (t, p): (Vec<usize>, Vec<usize>) = all.iter().copied().unzip();
    let too_short = outcomes.iter().filter(|o| o.short).count();
    EvaluationSummary {
        schema_version: SCHEMA_VERSION,
        thr_c,
        total_flows: total,
        too_short,
        too_short_pct: pct(too_short, total),
        classified: all.len(),
        classified_pct: pct(all.len(), total),
        classified_short: outcomes.iter().filter(|o| o.short_classified).count(),
        f1_classified: if t.is_empty() { 0.0 } else { f1_macro(&t, &p, n_classes).unwrap_or(0.0) },
        contexts,
    }
}

fn first_activation(clf: &Classifier) -> usize {
    clf.models.first().map_or(usize::MAX, |m| m.activation_count)
}

/// Replays every flow packet by packet: once a model is active, each new
/// packet is a classification attempt until one clears `thr_c`.
pub fn evaluate_classifier(
    clf: &Classifier,
    dataset: &LabeledDataset,
    options: &EvaluationOptions,
) -> Result<EvaluationSummary, TrainerError> {
    let first = first_activation(clf);
    let outcomes = dataset
        .flows
        .par_iter()
        .map(|flow| -> Result<FlowOutcome, TrainerError> {
            let truth = flow.label.expect("labeled dataset");
            let vectors = fold_packets(&flow.packets)?;
            let reach = vectors.len().min(COUNTER_MAX as usize);
            let mut outcome = FlowOutcome {
                classified: None,
                short: vectors.len() < first,
                short_classified: false,
                truth,
                reach,
            };
            for (i, v) in vectors.iter().enumerate() {
                let count = v.value(FeatureId::PktCount) as usize;
                debug_assert_eq!(count, (i + 1).min(COUNTER_MAX as usize));
                let Some(m) = clf.model_for(count) else { continue };
                let forest = &clf.models[m].forest;
                let Some(row) = vector_row(&forest.columns, v) else { continue };
                let (label, cert) = forest.predict(&row);
                if cert >= options.thr_c {
                    outcome.classified = Some((count, label));
                    break;
                }
            }
            if outcome.short && options.classify_short_flows && !clf.models.is_empty() {
                let forest = &clf.models[0].forest;
                if let Some(row) = vectors.last().and_then(|v| vector_row(&forest.columns, v)) {
                    let (label, cert) = forest.predict(&row);
                    if cert >= options.thr_c {
                        outcome.classified = Some((vectors.len(), label));
                        outcome.short_classified = true;
                    }
                }
            }
            Ok(outcome)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let last = outcomes
        .iter()
        .filter_map(|o| o.classified.map(|(c, _)| c))
        .chain(clf.models.iter().map(|m| m.activation_count))
        .max()
        .unwrap_or(0);
    let counts: Vec<usize> = (1..=last).collect();
    Ok(summarize(clf, &outcomes, options.thr_c, &counts))
}

/// The same acceptance rule over precomputed feature matrices, tracking
/// flows across contexts by row id.
pub fn evaluate_contexts(clf: &Classifier, data: &ContextDataset, thr_c: f64) -> EvaluationSummary {
    let first = first_activation(clf);
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut outcomes: Vec<FlowOutcome> = Vec::new();
    let mut contexts: Vec<_> = data.contexts.iter().collect();
    contexts.sort_by_key(|c| c.packet_count);
    for ctx in &contexts {
        for (i, id) in ctx.x.row_ids.iter().enumerate() {
            let slot = *index.entry(id.as_str()).or_insert_with(|| {
                outcomes.push(FlowOutcome {
                    classified: None,
                    short: true,
                    short_classified: false,
                    truth: ctx.y[i],
                    reach: 0,
                });
                outcomes.len() - 1
            });
            let o = &mut outcomes[slot];
            o.reach = ctx.packet_count;
            if ctx.packet_count >= first {
                o.short = false;
            }
        }
        let Some(m) = clf.model_for(ctx.packet_count) else { continue };
        let forest = &clf.models[m].forest;
        let Ok(pred) = forest.predict_matrix(&ctx.x) else { continue };
        for (i, id) in ctx.x.row_ids.iter().enumerate() {
            let o = &mut outcomes[index[id.as_str()]];
            if o.classified.is_none() && pred[i].1 >= thr_c {
                o.classified = Some((ctx.packet_count, pred[i].0));
            }
        }
    }
    let counts: Vec<usize> = contexts.iter().map(|c| c.packet_count).collect();
    summarize(clf, &outcomes, thr_c, &counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::build_context_dataset;
    use crate::forest::{param_grid, ClassWeights};
    use crate::synth::{two_class_trace, TraceConfig};
    use crate::trainer::{train_classifier, TrainerConfig};

    fn trained() -> (LabeledDataset, Classifier, ContextDataset) {
        let ds = two_class_trace(&TraceConfig {
            flows: 300,
            ..TraceConfig::default()
        });
        let data = build_context_dataset(&ds, &[1, 2, 3, 4]).unwrap();
        let config = TrainerConfig {
            thr_s: 0.9,
            grid: param_grid(&[6], &[8], &[ClassWeights::Uniform], 3),
            ..TrainerConfig::default()
        };
        let (clf, _) = train_classifier(&data, &config).unwrap();
        (ds, clf, data)
    }

    #[test]
    fn zero_threshold_classifies_everything_at_first_model() {
        let (ds, clf, data) = trained();
        let opts = EvaluationOptions::default();
        let s = evaluate_classifier(&clf, &ds, &opts).unwrap();
        let first = clf.models[0].activation_count;
        let reaching = ds.flows.iter().filter(|f| f.len() >= first).count();
        assert_eq!(s.classified, reaching);
        let at_first = s.contexts.iter().find(|c| c.packet_count == first).unwrap();
        assert_eq!(at_first.classified, reaching);

        // equals the first model's training-set F1 on its own context
        let ctx = data.context(first).unwrap();
        assert_eq!(s.f1_classified, clf.models[0].forest.score(&ctx.x, &ctx.y));

        let m = evaluate_contexts(&clf, &data, 0.0);
        assert_eq!(m.classified, reaching);
        assert_eq!(m.f1_classified, s.f1_classified);
    }

    #[test]
    fn unreachable_certainty_classifies_nothing() {
        let (ds, clf, _) = trained();
        let s = evaluate_classifier(&clf, &ds, &EvaluationOptions { thr_c: 1.01, classify_short_flows: false }).unwrap();
        assert_eq!(s.classified, 0);
        assert_eq!(s.classified_pct, 0.0);
    }

    #[test]
    fn cumulative_is_monotone() {
        let (ds, clf, _) = trained();
        let s = evaluate_classifier(&clf, &ds, &EvaluationOptions { thr_c: 0.95, classify_short_flows: false }).unwrap();
        for w in s.contexts.windows(2) {
            assert!(w[0].cumulative_pct <= w[1].cumulative_pct);
        }
    }
}
