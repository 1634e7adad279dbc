use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{DataplaneError, Switch, SwitchCounters, SwitchOptions, Verdict};
use crate::compiler::MemoryReport;
use crate::forest::f1_macro;
use crate::trainer::SCHEMA_VERSION;
use crate::traffic::{FlowKey, PacketRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketVerdict {
    pub key: FlowKey,
    /// 1-based position of the packet in its flow.
    pub packet_index: usize,
    /// Packet count held by the switch row after this packet.
    pub packet_count: u8,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fate", rename_all = "snake_case")]
pub enum FlowFate {
    Classified { packet_count: u8, label: usize, certainty: u8 },
    /// Hit a full table; later packets bypass the classifier.
    Unclassified,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextStats {
    pub packet_count: usize,
    pub classified: usize,
    pub classified_pct: f64,
    pub cumulative_pct: f64,
    pub cumulative_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationStats {
    pub schema_version: u32,
    pub options: SwitchOptions,
    pub packets: usize,
    /// Packets of flows that already had a final verdict.
    pub bypassed_packets: usize,
    pub flows: usize,
    pub classified_flows: usize,
    pub classified_pct: f64,
    pub unclassified_flows: usize,
    pub pending_flows: usize,
    /// Flows with fewer packets than the first model needs.
    pub too_short: usize,
    pub f1_classified: f64,
    pub counters: SwitchCounters,
    pub memory: MemoryReport,
    pub memory_bits: u64,
    pub contexts: Vec<ContextStats>,
    #[serde(skip)]
    pub verdicts: Vec<PacketVerdict>,
    #[serde(skip)]
    pub fates: BTreeMap<FlowKey, FlowFate>,
}

impl SimulationStats {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("stats serialize");
        s.push('\n');
        s
    }
}

fn pct(n: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * n as f64 / total as f64
    }
}

/// Feeds time-ordered packets through `switch`. A flow's packets stop
/// reaching the classifier once it is classified or has hit a full table.
/// `labels` maps flows to class names of the deployment; unlabeled flows
/// are simulated but left out of the F1 score.
pub fn replay(
    switch: &mut Switch,
    packets: &[PacketRecord],
    labels: &BTreeMap<FlowKey, String>,
) -> Result<SimulationStats, DataplaneError> {
    let classes = switch.config().classes.clone();
    let class_id: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut seen: HashMap<FlowKey, usize> = HashMap::new();
    let mut fates: BTreeMap<FlowKey, FlowFate> = BTreeMap::new();
    let mut verdicts = Vec::new();
    let mut bypassed = 0;
    for p in packets {
        let n = seen.entry(p.key).or_insert(0);
        *n += 1;
        let fate = fates.entry(p.key).or_insert(FlowFate::Pending);
        if *fate != FlowFate::Pending {
            bypassed += 1;
            continue;
        }
        let (verdict, count) = switch.process_packet(p)?;
        match verdict {
            Verdict::Classified { label, certainty } => {
                *fate = FlowFate::Classified {
                    packet_count: count,
                    label,
                    certainty,
                }
            }
            Verdict::Unclassified => *fate = FlowFate::Unclassified,
            _ => {}
        }
        verdicts.push(PacketVerdict {
            key: p.key,
            packet_index: *n,
            packet_count: count,
            verdict,
        });
    }

    let first = switch.config().first_activation().unwrap_or(usize::MAX);
    let flows = fates.len();
    let mut by_count: BTreeMap<usize, Vec<(Option<usize>, usize)>> = BTreeMap::new();
    for (key, fate) in &fates {
        if let FlowFate::Classified {
            packet_count, label, ..
        } = fate
        {
            let truth = labels.get(key).and_then(|l| class_id.get(l.as_str()).copied());
            by_count.entry(*packet_count as usize).or_default().push((truth, *label));
        }
    }
    let f1 = |pairs: &[(usize, usize)]| {
        if pairs.is_empty() {
            0.0
        } else {
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            f1_macro(&t, &p, classes.len()).unwrap_or(0.0)
        }
    };
    let mut contexts = Vec::new();
    let mut labeled = Vec::new();
    let mut cumulative = 0;
    let last = by_count.keys().next_back().copied().unwrap_or(0).max(
        switch.config().model_switch.iter().map(|e| e.from_count).max().unwrap_or(0),
    );
    for c in 1..=last {
        let newly = by_count.get(&c).map_or(&[][..], Vec::as_slice);
        cumulative += newly.len();
        labeled.extend(newly.iter().filter_map(|&(t, l)| t.map(|t| (t, l))));
        contexts.push(ContextStats {
            packet_count: c,
            classified: newly.len(),
            classified_pct: pct(newly.len(), flows),
            cumulative_pct: pct(cumulative, flows),
            cumulative_f1: f1(&labeled),
        });
    }
    let count = |f: &dyn Fn(&FlowFate) -> bool| fates.values().filter(|x| f(x)).count();
    let classified_flows = count(&|f| matches!(f, FlowFate::Classified { .. }));
    Ok(SimulationStats {
        schema_version: SCHEMA_VERSION,
        options: *switch.options(),
        packets: packets.len(),
        bypassed_packets: bypassed,
        flows,
        classified_flows,
        classified_pct: pct(classified_flows, flows),
        unclassified_flows: count(&|f| *f == FlowFate::Unclassified),
        pending_flows: count(&|f| *f == FlowFate::Pending),
        too_short: seen.values().filter(|&&n| n < first).count(),
        f1_classified: f1(&labeled),
        counters: *switch.counters(),
        memory: switch.config().memory,
        memory_bits: switch.memory_bits(),
        contexts,
        verdicts,
        fates,
    })
}

/// `flow_key,packet_index,verdict,label,certainty`; certainty is the 8-bit
/// quantized value, empty when no model ran.
pub fn write_verdicts_csv<W: Write>(out: W, verdicts: &[PacketVerdict], classes: &[String]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["flow_key", "packet_index", "verdict", "label", "certainty"])?;
    for v in verdicts {
        let (name, label, cert) = match v.verdict {
            Verdict::Classified { label, certainty } => ("classified", Some(label), Some(certainty)),
            Verdict::Pending { label, certainty } => ("pending", Some(label), Some(certainty)),
            Verdict::NoModel => ("no_model", None, None),
            Verdict::Unclassified => ("unclassified", None, None),
        };
        w.write_record([
            v.key.to_string(),
            v.packet_index.to_string(),
            name.to_string(),
            label.map_or(String::new(), |l| classes[l].clone()),
            cert.map_or(String::new(), |c| c.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile_classifier, CompileOptions};
    use crate::dataplane::SwitchOptions;
    use crate::features::{build_context_dataset, fold_packets, Column, FeatureId};
    use crate::forest::{param_grid, ClassWeights, DecisionTree, ForestParams, RandomForest, TreeNode};
    use crate::synth::{two_class_trace, TraceConfig};
    use crate::trainer::{
        evaluate_classifier, train_classifier, Classifier, ContextModel, EvaluationOptions, TrainerConfig,
    };

    fn count_config() -> crate::compiler::DeploymentConfig {
        let leaf = |label| TreeNode::Leaf {
            label,
            certainty: 1.0,
            support: 1,
            weight: 1.0,
            impurity: 0.0,
        };
        let tree = DecisionTree::from_root(TreeNode::Split {
            feature: 0,
            threshold: 2.5,
            weight: 1.0,
            impurity: 0.5,
            left: Box::new(leaf(0)),
            right: Box::new(leaf(1)),
        });
        let clf = Classifier {
            schema_version: SCHEMA_VERSION,
            classes: vec!["a".into(), "b".into()],
            models: vec![ContextModel {
                activation_count: 4,
                forest: RandomForest {
                    columns: vec![Column::Packet(FeatureId::PktCount)],
                    n_classes: 2,
                    params: ForestParams::default(),
                    trees: vec![tree],
                },
                score_at_extraction: 1.0,
                reused_from: None,
            }],
            thr_s: 0.9,
            thr_c: 0.0,
        };
        compile_classifier(&clf, &CompileOptions::default()).unwrap()
    }

    #[test]
    fn empty_stream() {
        let mut sw = Switch::new(count_config(), SwitchOptions::default()).unwrap();
        let s = replay(&mut sw, &[], &BTreeMap::new()).unwrap();
        assert_eq!((s.packets, s.flows, s.classified_flows), (0, 0, 0));
        assert_eq!(s.counters, SwitchCounters::default());
    }

    #[test]
    fn single_row_two_interleaved_flows() {
        let ds = two_class_trace(&TraceConfig {
            flows: 2,
            min_packets: 30,
            max_packets: 30,
            span_us: 1,
            ..TraceConfig::default()
        });
        let packets = ds.packets_in_time_order();
        let options = SwitchOptions {
            rows: 1,
            probes: 1,
            ..SwitchOptions::default()
        };
        let mut sw = Switch::new(count_config(), options).unwrap();
        let s = replay(&mut sw, &packets, &ds.label_map()).unwrap();
        assert_eq!(s.classified_flows, 1);
        assert_eq!(s.unclassified_flows, 1);
        assert!(s.counters.table_full > 0);
        let mut csv = Vec::new();
        write_verdicts_csv(&mut csv, &s.verdicts, &sw.config().classes).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("flow_key,packet_index,verdict,label,certainty\n"));
        assert!(text.contains(",4,classified,b,255"));
    }

    #[test]
    fn matches_software_evaluation() {
        let ds = two_class_trace(&TraceConfig {
            flows: 400,
            ..TraceConfig::default()
        });
        let data = build_context_dataset(&ds, &[2, 3, 4, 5]).unwrap();
        let config = TrainerConfig {
            thr_s: 0.9,
            grid: param_grid(&[6], &[8], &[ClassWeights::Uniform], 11),
            ..TrainerConfig::default()
        };
        let (clf, _) = train_classifier(&data, &config).unwrap();
        let packets = ds.packets_in_time_order();
        let labels = ds.label_map();
        let compile = |thr_c| {
            let options = CompileOptions {
                accuracy: 1e-6,
                thr_c: Some(thr_c),
                ..CompileOptions::default()
            };
            compile_classifier(&clf, &options).unwrap()
        };

        // certainty 0: identical to the float classifier
        let mut sw = Switch::new(compile(0.0), SwitchOptions::default()).unwrap();
        let sim = replay(&mut sw, &packets, &labels).unwrap();
        assert_eq!(sim.counters.table_full, 0);
        let eval = evaluate_classifier(&clf, &ds, &EvaluationOptions::default()).unwrap();
        for (a, b) in sim.contexts.iter().zip(&eval.contexts) {
            assert_eq!((a.packet_count, a.classified), (b.packet_count, b.classified));
        }
        assert_eq!(sim.classified_flows, eval.classified);
        assert_eq!(sim.f1_classified, eval.f1_classified);

        // with a threshold: identical to the quantized software reference
        let deployment = compile(0.9);
        let mut sw = Switch::new(deployment.clone(), SwitchOptions::default()).unwrap();
        let sim = replay(&mut sw, &packets, &labels).unwrap();
        for flow in &ds.flows {
            let mut want = FlowFate::Pending;
            for (i, v) in fold_packets(&flow.packets).unwrap().iter().enumerate() {
                let Some(m) = deployment.model_for(i + 1) else { continue };
                let (label, certainty) = deployment.predict(m, &deployment.quantize_vector(v)).unwrap();
                if certainty as u32 >= deployment.thr_c_q {
                    want = FlowFate::Classified {
                        packet_count: (i + 1) as u8,
                        label,
                        certainty,
                    };
                    break;
                }
            }
            assert_eq!(sim.fates[&flow.key], want);
        }
    }
}
