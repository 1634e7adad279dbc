//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Expected values come from oracles written here, not from the
//! library code under test.

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use flowforest::analysis::{dbscan_cluster, mi_distance_matrix};
use flowforest::cli::{cmd_compile, cmd_extract, cmd_train, RunConfig};
use flowforest::compiler::{
    aggregate_quantized, compile_classifier, quantize_spec, quantize_threshold, quantize_value, CompileOptions,
    MemoryReport, QuantSpec,
};
use flowforest::dataplane::{replay, FlowFate, Switch, SwitchOptions};
use flowforest::features::{build_context_dataset, fold_packets, Column, FeatureId, FeatureMatrix};
use flowforest::forest::{ClassWeights, DecisionTree, ForestParams, RandomForest, TreeNode};
use flowforest::synth::{phased_contexts, two_class_packets, two_class_trace, PhasedConfig, TraceConfig};
use flowforest::trainer::{
    evaluate_classifier, train_classifier, Classifier, ContextModel, ContextOutcome, EvaluationOptions, TrainerConfig,
};
use flowforest::traffic::{write_labels, write_pcap, FlowKey, PacketRecord, TcpFlags, PROTO_TCP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn f1_macro_oracle(truth: &[usize], pred: &[usize], n_classes: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..n_classes {
        let tp = truth.iter().zip(pred).filter(|&(&t, &p)| t == c && p == c).count() as f64;
        let fp = truth.iter().zip(pred).filter(|&(&t, &p)| t != c && p == c).count() as f64;
        let fn_ = truth.iter().zip(pred).filter(|&(&t, &p)| t == c && p != c).count() as f64;
        total += if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
    }
    total / n_classes as f64
}

fn ac1_bit_width() -> Outcome {
    let spec = quantize_spec(&Column::Packet(FeatureId::LenMax), &[67.8, 300.0, 1234.5], 0.01)
        .ok_or("no spec for a thresholded feature")?;
    // 2 * 1234.5 / (67.8 * 0.005) = 7283.2 -> floor(log2) = 12 -> 13 bits
    let expected = ((2.0f64 * 1234.5 / (67.8 * 0.5 * 0.01)).log2().floor() as u32) + 1;
    ensure!(spec.bits == 13 && expected == 13, "bits {} (oracle {expected})", spec.bits);
    Ok(format!("b = {}, s = {}", spec.bits, spec.shift))
}

fn ac2_phased_contexts() -> Outcome {
    let cfg = PhasedConfig::default();
    let data = phased_contexts(&cfg);
    let trainer = TrainerConfig {
        thr_s: 0.75,
        ..TrainerConfig::default()
    };
    let (clf, report) = train_classifier(&data, &trainer).map_err(|e| e.to_string())?;
    for e in report.entries.iter().filter(|e| e.outcome == ContextOutcome::Extracted) {
        ensure!(e.score >= 0.75, "model at p={} scored {:.3}", e.packet_count, e.score);
    }
    for (i, m) in clf.models.iter().enumerate() {
        ensure!(
            m.score_at_extraction >= 0.75,
            "model {i} score {:.3}",
            m.score_at_extraction
        );
        for c in m.features() {
            ensure!(!c.name().starts_with('N'), "model {i} uses noise column {c}");
        }
    }
    let switches = clf.models.len().saturating_sub(1);
    let reuses = clf.models.iter().filter(|m| m.reused_from.is_some()).count();
    ensure!(switches >= 1, "no model switch");
    ensure!(reuses >= 1, "no model reuse");
    let plan: Vec<String> = clf
        .models
        .iter()
        .map(|m| format!("p{}{}", m.activation_count, if m.reused_from.is_some() { "(reuse)" } else { "" }))
        .collect();
    Ok(format!("{} models [{}], {} reuse", clf.models.len(), plan.join(" "), reuses))
}

struct TraceRun {
    clf: Classifier,
    dataset: flowforest::traffic::LabeledDataset,
    packets: Vec<PacketRecord>,
    labels: BTreeMap<FlowKey, String>,
    data: flowforest::features::ContextDataset,
}

fn trace_run() -> Result<TraceRun, String> {
    let trace = TraceConfig {
        flows: 5000,
        ..TraceConfig::default()
    };
    let (packets, labels) = two_class_packets(&trace);
    let dataset = two_class_trace(&trace);
    let counts: Vec<usize> = (1..=10).collect();
    let data = build_context_dataset(&dataset, &counts).map_err(|e| e.to_string())?;
    let (clf, _) = train_classifier(&data, &TrainerConfig::default()).map_err(|e| e.to_string())?;
    Ok(TraceRun {
        clf,
        dataset,
        packets,
        labels,
        data,
    })
}

fn simulate(run: &TraceRun, accuracy: f64) -> Result<flowforest::dataplane::SimulationStats, String> {
    let options = CompileOptions {
        accuracy,
        thr_c: Some(0.0),
        ..CompileOptions::default()
    };
    let deployment = compile_classifier(&run.clf, &options).map_err(|e| e.to_string())?;
    let mut switch = Switch::new(
        deployment,
        SwitchOptions {
            rows: 1 << 20,
            ..SwitchOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    replay(&mut switch, &run.packets, &run.labels).map_err(|e| e.to_string())
}

fn ac3_first_model_guarantee(run: &TraceRun) -> Outcome {
    let first = &run.clf.models[0];
    let ctx = run
        .data
        .context(first.activation_count)
        .ok_or("first activation has no context data")?;
    let n_classes = run.clf.classes.len();
    let cols = first.forest.column_map(&ctx.x).map_err(|e| e.to_string())?;
    let pred: Vec<usize> = (0..ctx.x.n_rows())
        .map(|i| {
            let row: Vec<f64> = cols.iter().map(|&j| ctx.x.value(i, j)).collect();
            first.forest.predict(&row).0
        })
        .collect();
    let training_f1 = f1_macro_oracle(&ctx.y, &pred, n_classes);

    let stats = simulate(run, 0.01)?;
    ensure!(stats.unclassified_flows == 0, "{} flows hit a full table", stats.unclassified_flows);
    let class_id: BTreeMap<&str, usize> = run.clf.classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let (mut truth, mut got) = (Vec::new(), Vec::new());
    for (key, fate) in &stats.fates {
        if let FlowFate::Classified {
            packet_count, label, ..
        } = fate
        {
            ensure!(
                *packet_count as usize == first.activation_count,
                "flow classified at {packet_count}, first model starts at {}",
                first.activation_count
            );
            truth.push(class_id[run.labels[key].as_str()]);
            got.push(*label);
        }
    }
    ensure!(
        got.len() == ctx.x.n_rows(),
        "{} flows classified, {} reach the first model",
        got.len(),
        ctx.x.n_rows()
    );
    let simulated_f1 = f1_macro_oracle(&truth, &got, n_classes);
    ensure!(
        simulated_f1 == training_f1,
        "simulated F1 {simulated_f1} != training F1 {training_f1}"
    );
    Ok(format!(
        "{} flows at p={}, F1 {:.6} both ways",
        got.len(),
        first.activation_count,
        simulated_f1
    ))
}

/// Direct walk of one tree with thresholds quantized by hand.
fn oracle_tree(tree: &DecisionTree, slot_of: &[usize], specs: &[QuantSpec], q: &[u64]) -> (usize, u8) {
    let mut node = &tree.root;
    loop {
        match node {
            TreeNode::Leaf { label, certainty, .. } => return (*label, (certainty * 255.0).round() as u8),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                let slot = slot_of[*feature];
                let s = &specs[slot];
                let top = (1u64 << s.bits) - 2;
                let t = (threshold / 2f64.powi(s.shift)).floor().clamp(0.0, top as f64) as u64;
                node = if q[slot] > t { right } else { left };
            }
        }
    }
}

fn oracle_vote(votes: &[(usize, u8)], n_classes: usize) -> (usize, u8) {
    let mut count = vec![0usize; n_classes];
    let mut sum = vec![0usize; n_classes];
    for &(l, c) in votes {
        count[l] += 1;
        sum[l] += c as usize;
    }
    let best = (0..n_classes).rev().max_by_key(|&c| count[c]).unwrap();
    (best, (sum[best] / count[best]) as u8)
}

fn ac4_table_walk() -> Outcome {
    let trace = TraceConfig {
        flows: 3000,
        seed: 11,
        mean_iat_us: [4_000.0, 6_000.0],
        length_range: [(60, 400), (100, 500)],
        ..TraceConfig::default()
    };
    let data = build_context_dataset(&two_class_trace(&trace), &[5]).map_err(|e| e.to_string())?;
    let ctx = &data.contexts[0];
    let keep: Vec<usize> = ctx.x.defined_columns();
    let x = ctx.x.select_columns(&keep);
    let params = ForestParams {
        n_trees: 32,
        max_depth: 10,
        class_weights: ClassWeights::Uniform,
        features_per_split: None,
        bootstrap: true,
        seed: 3,
    };
    let forest = RandomForest::fit(&x, &ctx.y, 2, &params).map_err(|e| e.to_string())?;
    ensure!(forest.max_depth() == 10, "forest only reached depth {}", forest.max_depth());
    let clf = Classifier {
        schema_version: 1,
        classes: data.classes.clone(),
        models: vec![ContextModel {
            activation_count: 1,
            forest: forest.clone(),
            score_at_extraction: 1.0,
            reused_from: None,
        }],
        thr_s: 0.0,
        thr_c: 0.0,
    };
    let deployment = compile_classifier(&clf, &CompileOptions::default()).map_err(|e| e.to_string())?;
    let specs = deployment.quant.clone();
    let slot_of: Vec<usize> = forest
        .columns
        .iter()
        .map(|c| specs.iter().position(|s| &s.column == c).unwrap_or(usize::MAX))
        .collect();
    let mut thresholds: Vec<Vec<f64>> = vec![Vec::new(); specs.len()];
    for tree in &forest.trees {
        tree.walk(|n, _| {
            if let TreeNode::Split { feature, threshold, .. } = n {
                thresholds[slot_of[*feature]].push(*threshold);
            }
        });
    }
    let switch = Switch::new(deployment, SwitchOptions::default()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let start = Instant::now();
    for i in 0..10_000 {
        let q: Vec<u64> = specs
            .iter()
            .zip(&thresholds)
            .map(|(s, ts)| {
                let max = (1u64 << s.bits) - 1;
                if rng.gen_bool(0.8) && !ts.is_empty() {
                    // land near a threshold so both branches get exercised
                    let t = ts[rng.gen_range(0..ts.len())] / 2f64.powi(s.shift);
                    ((t + rng.gen_range(-3.0..3.0)).max(0.0) as u64).min(max)
                } else {
                    rng.gen_range(0..=max)
                }
            })
            .collect();
        let votes = switch.table_walk(0, &q).map_err(|e| e.to_string())?;
        let got = aggregate_quantized(&votes, 2);
        let direct: Vec<(usize, u8)> = forest.trees.iter().map(|t| oracle_tree(t, &slot_of, &specs, &q)).collect();
        ensure!(votes == direct, "vector {i}: per-tree outputs differ");
        let want = oracle_vote(&direct, 2);
        ensure!(got == want, "vector {i}: {got:?} != {want:?}");
    }
    Ok(format!("10000/10000 exact, 32 trees depth 10, {:.2?}", start.elapsed()))
}

fn ac5_comparison_preservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let columns = [
        Column::Packet(FeatureId::IatMin),
        Column::Packet(FeatureId::LenMax),
        Column::Packet(FeatureId::LenTotal),
        Column::Packet(FeatureId::Duration),
        Column::External("x".into()),
    ];
    let mut checked = 0;
    while checked < 10_000 {
        let a = rng.gen_range(0.001..0.3);
        let t_min: f64 = rng.gen_range(1.0..50_000.0);
        let t_max = t_min * rng.gen_range(1.0..500.0);
        let column = &columns[rng.gen_range(0..columns.len())];
        let spec = quantize_spec(column, &[t_min, t_max], a).ok_or("no spec")?;
        let t = rng.gen_range(t_min..=t_max);
        let v = if rng.gen_bool(0.5) {
            (t * (1.0 + a) + rng.gen_range(0.0..t)).ceil()
        } else {
            let hi = (t * (1.0 - a)).floor();
            if hi < 0.0 {
                continue;
            }
            rng.gen_range(0.0..=hi).floor()
        };
        if (v - t).abs() < a * t || v > u32::MAX as f64 {
            continue;
        }
        let v = v as u64;
        let quantized = quantize_value(v, &spec) > quantize_threshold(t, &spec);
        ensure!(
            quantized == (v as f64 > t),
            "{column}: v={v} t={t} a={a} spec=(b={}, s={}) flipped",
            spec.bits,
            spec.shift
        );
        checked += 1;
    }
    Ok(format!("{checked} triples preserved"))
}

/// Every feature recomputed over a whole prefix with no shared state.
fn batch_features(prefix: &[PacketRecord]) -> [u64; FeatureId::COUNT] {
    let len16 = |p: &PacketRecord| (p.length as u64).min(u16::MAX as u64);
    let lens: Vec<u64> = prefix.iter().map(len16).collect();
    let iats: Vec<u64> = prefix
        .windows(2)
        .map(|w| (w[1].timestamp - w[0].timestamp).min(u32::MAX as u64))
        .collect();
    let halve = |xs: &[u64]| xs[1..].iter().fold(xs[0], |acc, &x| (acc + x) / 2);
    let flag = |f: TcpFlags| prefix.iter().filter(|p| p.tcp_flags.contains(f)).count().min(127) as u64;
    let last = prefix.last().unwrap();
    let mut out = [0u64; FeatureId::COUNT];
    for id in FeatureId::ALL {
        out[id.index()] = match id {
            FeatureId::IatMin => iats.iter().copied().min().unwrap_or(0),
            FeatureId::IatMax => iats.iter().copied().max().unwrap_or(0),
            FeatureId::IatAvg => {
                if iats.is_empty() {
                    0
                } else {
                    halve(&iats)
                }
            }
            FeatureId::LenMin => *lens.iter().min().unwrap(),
            FeatureId::LenMax => *lens.iter().max().unwrap(),
            FeatureId::LenAvg => halve(&lens),
            FeatureId::LenTotal => lens.iter().sum::<u64>().min(u32::MAX as u64),
            FeatureId::PktCount => (prefix.len() as u64).min(127),
            FeatureId::SynCount => flag(TcpFlags::SYN),
            FeatureId::AckCount => flag(TcpFlags::ACK),
            FeatureId::PshCount => flag(TcpFlags::PSH),
            FeatureId::FinCount => flag(TcpFlags::FIN),
            FeatureId::RstCount => flag(TcpFlags::RST),
            FeatureId::EceCount => flag(TcpFlags::ECE),
            FeatureId::Duration => (last.timestamp - prefix[0].timestamp).min(u32::MAX as u64),
            FeatureId::SrcPort => last.key.src_port as u64,
            FeatureId::DstPort => last.key.dst_port as u64,
            FeatureId::CurLen => len16(last),
        };
    }
    out
}

fn ac6_incremental_features() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut compared = 0;
    for f in 0..1000 {
        let key = FlowKey {
            src_ip: [10, 0, (f >> 8) as u8, f as u8].into(),
            dst_ip: [10, 1, 0, 1].into(),
            src_port: rng.gen(),
            dst_port: rng.gen(),
            protocol: PROTO_TCP,
        };
        let n = rng.gen_range(1..=50);
        let mut ts = rng.gen_range(0..1_000_000u64);
        let packets: Vec<PacketRecord> = (0..n)
            .map(|_| {
                // occasional huge gaps exercise the 32-bit time clamp
                ts += if rng.gen_bool(0.02) {
                    rng.gen_range(0..10_000_000_000)
                } else {
                    rng.gen_range(0..200_000)
                };
                PacketRecord {
                    timestamp: ts,
                    key,
                    length: if rng.gen_bool(0.05) { rng.gen_range(1..200_000) } else { rng.gen_range(40..1500) },
                    tcp_flags: TcpFlags::from_bits_truncate(rng.gen()),
                }
            })
            .collect();
        let incremental = fold_packets(&packets).map_err(|e| e.to_string())?;
        for (i, v) in incremental.iter().enumerate() {
            let want = batch_features(&packets[..=i]);
            for id in FeatureId::ALL {
                if v.get(id).is_some() {
                    ensure!(
                        v.value(id) == want[id.index()],
                        "flow {f} prefix {}: {id} = {} batch {}",
                        i + 1,
                        v.value(id),
                        want[id.index()]
                    );
                    compared += 1;
                }
            }
        }
    }
    Ok(format!("{compared} feature values equal"))
}

fn stump(feature: usize, threshold: f64) -> DecisionTree {
    let leaf = |label| TreeNode::Leaf {
        label,
        certainty: 1.0,
        support: 1,
        weight: 1.0,
        impurity: 0.0,
    };
    DecisionTree::from_root(TreeNode::Split {
        feature,
        threshold,
        weight: 1.0,
        impurity: 0.5,
        left: Box::new(leaf(0)),
        right: Box::new(leaf(1)),
    })
}

fn stump_classifier(columns: Vec<Column>, splits: &[(usize, f64)]) -> Classifier {
    Classifier {
        schema_version: 1,
        classes: vec!["a".into(), "b".into()],
        models: vec![ContextModel {
            activation_count: 1,
            forest: RandomForest {
                columns,
                n_classes: 2,
                params: ForestParams::default(),
                trees: splits.iter().map(|&(f, t)| stump(f, t)).collect(),
            },
            score_at_extraction: 1.0,
            reused_from: None,
        }],
        thr_s: 0.9,
        thr_c: 0.0,
    }
}

fn ac7_memory_accounting() -> Outcome {
    // len_max over {67.8, 1234.5}: 13 bits; syn_count over {2.5} with the
    // counter rule a = 1, t_min = 1: floor(log2(5 / 0.5)) + 1 = 4 bits.
    let a = stump_classifier(
        vec![Column::Packet(FeatureId::LenMax), Column::Packet(FeatureId::SynCount)],
        &[(0, 67.8), (0, 1234.5), (1, 2.5)],
    );
    // iat_max over {1000.5, 50000.5}: 15 bits; len_total over {5000.5}:
    // 9 bits + shift 4 = 13; len_avg raw 16; dst_port free; arrival 32.
    let b = stump_classifier(
        vec![
            Column::Packet(FeatureId::IatMax),
            Column::Packet(FeatureId::LenTotal),
            Column::Packet(FeatureId::LenAvg),
            Column::Packet(FeatureId::DstPort),
        ],
        &[(0, 1000.5), (0, 50000.5), (1, 5000.5), (2, 300.5), (3, 442.5)],
    );
    let hand = [(17u32, 73u32, 1_095_890u64), (76, 132, 606_060)];
    let mut shown = Vec::new();
    for (clf, (bits, row, flows)) in [a, b].iter().zip(hand) {
        let d = compile_classifier(clf, &CompileOptions::default()).map_err(|e| e.to_string())?;
        let widths: u32 = d.layout.fields.iter().map(|f| f.width).sum();
        ensure!(widths == bits, "layout widths {widths}, hand {bits}");
        ensure!(d.memory.row_bits == 49 + 7 + widths, "row bits {}", d.memory.row_bits);
        ensure!(d.memory.row_bits == row, "row bits {} hand {row}", d.memory.row_bits);
        ensure!(d.memory.flows_per_10mb == flows, "flows {} hand {flows}", d.memory.flows_per_10mb);
        shown.push(format!("{row} bits -> {flows}"));
    }
    for feature_bits in 0..=(344 - 56) {
        let m = MemoryReport::for_layout(feature_bits);
        ensure!(m.flows_per_10mb >= 232_000, "{} bits -> {}", m.row_bits, m.flows_per_10mb);
    }
    Ok(format!("{}; <=344 bits keeps >=232k flows", shown.join(", ")))
}

fn ac8_trace_accuracy(run: &TraceRun) -> Outcome {
    let stats = simulate(run, 0.01)?;
    let first = run.clf.models[0].activation_count;
    let at_first = stats
        .contexts
        .iter()
        .find(|c| c.packet_count == first)
        .ok_or("no stats at the first context")?;
    let offline = evaluate_classifier(&run.clf, &run.dataset, &EvaluationOptions::default()).map_err(|e| e.to_string())?;
    ensure!(
        at_first.classified_pct >= 90.0,
        "{:.1}% classified at p={first}",
        at_first.classified_pct
    );
    ensure!(stats.f1_classified >= 0.9, "simulated F1 {:.3}", stats.f1_classified);
    ensure!(offline.f1_classified >= 0.9, "offline F1 {:.3}", offline.f1_classified);
    Ok(format!(
        "{:.1}% at p={first}, F1 {:.3} (offline {:.3})",
        at_first.classified_pct, stats.f1_classified, offline.f1_classified
    ))
}

fn ac9_grouping() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 10_000;
    let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..1000) as f64).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0..1000) as f64).collect();
    let e: Vec<f64> = (0..n).map(|_| rng.gen_range(0..1000) as f64).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![a[i], a[i], c[i], e[i]]).collect();
    let cols = ["a", "a_copy", "c", "e"].iter().map(|s| Column::External(s.to_string())).collect();
    let x = FeatureMatrix::from_rows(cols, &rows);
    let d = mi_distance_matrix(&x, &[0, 1, 2, 3]).map_err(|e| e.to_string())?;
    ensure!(d.d[0][1] == 0.0, "duplicate distance {}", d.d[0][1]);
    let mut min_indep = f64::INFINITY;
    for i in 0..4 {
        for j in i + 1..4 {
            if (i, j) != (0, 1) {
                ensure!(d.d[i][j] > 0.9, "d({i},{j}) = {:.4}", d.d[i][j]);
                min_indep = min_indep.min(d.d[i][j]);
            }
        }
    }
    let groups = dbscan_cluster(&d, 0.3, 1);
    ensure!(
        groups.groups == vec![vec![0, 1], vec![2], vec![3]],
        "groups {:?}",
        groups.groups
    );
    Ok(format!("d(dup) = 0, min independent d = {min_indep:.4}"))
}

fn ac10_determinism() -> Outcome {
    let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let (packets, labels) = two_class_packets(&TraceConfig {
        flows: 800,
        seed: 10,
        ..TraceConfig::default()
    });
    let capture = tmp.path().join("trace.pcap");
    let label_path = tmp.path().join("labels.csv");
    fs::write(&capture, write_pcap(&packets)).map_err(|e| e.to_string())?;
    write_labels(fs::File::create(&label_path).map_err(|e| e.to_string())?, &labels).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["first", "second"] {
        let cfg = RunConfig {
            capture: Some(capture.clone()),
            labels: Some(label_path.clone()),
            out_dir: tmp.path().join(run),
            packet_counts: (1..=6).collect(),
            seed: 17,
            ..RunConfig::default()
        };
        cmd_extract(&cfg).map_err(|e| e.to_string())?;
        cmd_train(&cfg, Some(&cfg.out_dir.join("features"))).map_err(|e| e.to_string())?;
        cmd_compile(&cfg, &cfg.out_dir.join("classifier.json")).map_err(|e| e.to_string())?;
        let read = |f: &str| fs::read(cfg.out_dir.join(f)).map_err(|e| e.to_string());
        outputs.push((read("classifier.json")?, read("deployment.json")?));
    }
    ensure!(outputs[0].0 == outputs[1].0, "classifier.json differs between runs");
    ensure!(outputs[0].1 == outputs[1].1, "deployment.json differs between runs");
    Ok(format!(
        "classifier.json {} bytes, deployment.json {} bytes identical",
        outputs[0].0.len(),
        outputs[0].1.len()
    ))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{name} PASS ({secs:.1}s) {detail}"),
            Err(why) => {
                failed += 1;
                println!("{name} FAIL ({secs:.1}s) {why}");
            }
        }
    };
    report("AC1", &ac1_bit_width);
    report("AC2", &ac2_phased_contexts);
    let run = trace_run();
    report("AC3", &|| ac3_first_model_guarantee(run.as_ref().map_err(Clone::clone)?));
    report("AC4", &ac4_table_walk);
    report("AC5", &ac5_comparison_preservation);
    report("AC6", &ac6_incremental_features);
    report("AC7", &ac7_memory_accounting);
    report("AC8", &|| ac8_trace_accuracy(run.as_ref().map_err(Clone::clone)?));
    report("AC9", &ac9_grouping);
    report("AC10", &ac10_determinism);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
