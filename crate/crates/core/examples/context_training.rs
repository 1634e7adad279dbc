//! Trains a sequence of context-dependent forests on feature-only data whose
//! informative columns change with the packet count, and prints which model
//! is active where.
//!
//! cargo run --release --example context_training

use flowforest::synth::{phased_contexts, PhasedConfig};
use flowforest::trainer::{evaluate_contexts, train_classifier, TrainerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = phased_contexts(&PhasedConfig::default());
    let config = TrainerConfig {
        thr_s: 0.75,
        ..TrainerConfig::default()
    };
    let (clf, report) = train_classifier(&data, &config)?;

    println!("redundancy groups: {:?}", report.groups);
    for e in &report.entries {
        println!(
            "p={:<2} {:<13} model={:<4} score={:.3} features={}",
            e.packet_count,
            format!("{:?}", e.outcome),
            e.model.map_or("-".to_string(), |m| m.to_string()),
            e.score,
            e.features.join(",")
        );
    }
    for (i, m) in clf.models.iter().enumerate() {
        let reuse = m.reused_from.map_or(String::new(), |r| format!(" (re-activates model {r})"));
        println!(
            "model {i}: active from {} packets, {} trees, features {:?}{reuse}",
            m.activation_count,
            m.forest.trees.len(),
            m.features().iter().map(|c| c.to_string()).collect::<Vec<_>>()
        );
    }

    let eval = evaluate_contexts(&clf, &data, 0.8);
    println!("\ncertainty >= 0.8:");
    for c in &eval.contexts {
        println!(
            "p={:<2} newly classified {:>5.1}%  cumulative {:>5.1}%  F1 {:.3}",
            c.packet_count, c.classified_pct, c.cumulative_pct, c.cumulative_f1
        );
    }
    Ok(())
}
