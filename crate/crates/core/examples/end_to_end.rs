//! The whole pipeline on a generated capture: pcap bytes, flows, context
//! features, trained classifier, compiled deployment and switch replay,
//! compared with the software evaluation of the same classifier.
//!
//! cargo run --release --example end_to_end

use flowforest::compiler::{compile_classifier, CompileOptions};
use flowforest::dataplane::{replay, Switch, SwitchOptions};
use flowforest::features::build_context_dataset;
use flowforest::synth::{two_class_packets, TraceConfig};
use flowforest::trainer::{evaluate_classifier, train_classifier, EvaluationOptions, TrainerConfig};
use flowforest::traffic::{assemble_flows, parse_pcap, write_pcap, LabeledDataset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (packets, labels) = two_class_packets(&TraceConfig::default());
    let capture = parse_pcap(&write_pcap(&packets))?;
    let (ds, _) = LabeledDataset::from_flows(assemble_flows(&capture.packets), &labels)?;
    let data = build_context_dataset(&ds, &[1, 2, 3, 4, 5, 6])?;
    let (clf, report) = train_classifier(&data, &TrainerConfig::default())?;
    println!("training: {} models from {} contexts", clf.models.len(), report.entries.len());

    let thr_c = 0.8;
    let deployment = compile_classifier(
        &clf,
        &CompileOptions {
            thr_c: Some(thr_c),
            ..CompileOptions::default()
        },
    )?;
    let mut switch = Switch::new(deployment, SwitchOptions::default())?;
    let sim = replay(&mut switch, &capture.packets, &ds.label_map())?;
    let soft = evaluate_classifier(
        &clf,
        &ds,
        &EvaluationOptions {
            thr_c,
            classify_short_flows: false,
        },
    )?;
    println!("software: {:.1}% classified, F1 {:.3}", soft.classified_pct, soft.f1_classified);
    println!(
        "switch:   {:.1}% classified, F1 {:.3}, {} bits per flow",
        sim.classified_pct, sim.f1_classified, sim.memory.row_bits
    );
    Ok(())
}
