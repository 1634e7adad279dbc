//! Trains a small classifier, compiles it for the switch and prints the
//! quantization of every feature, the register layout and a few table
//! entries.
//!
//! cargo run --release --example compile_tables

use flowforest::compiler::{compile_classifier, CompileOptions};
use flowforest::features::build_context_dataset;
use flowforest::forest::{param_grid, ClassWeights};
use flowforest::synth::{two_class_trace, TraceConfig};
use flowforest::trainer::{train_classifier, TrainerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = two_class_trace(&TraceConfig {
        flows: 1000,
        ..TraceConfig::default()
    });
    let data = build_context_dataset(&ds, &[2, 3, 4])?;
    let config = TrainerConfig {
        thr_s: 0.97,
        grid: param_grid(&[3], &[4], &[ClassWeights::Uniform], 0),
        ..TrainerConfig::default()
    };
    let (clf, _) = train_classifier(&data, &config)?;
    let deployment = compile_classifier(&clf, &CompileOptions::default())?;

    for s in &deployment.quant {
        println!(
            "{:<10} thresholds [{}, {}] -> {} bits, shift {}",
            s.column.to_string(),
            s.t_min,
            s.t_max,
            s.bits,
            s.shift
        );
    }
    for f in &deployment.layout.fields {
        println!("field {:<12} {:?} at bit {} width {}", f.name(), f.encoding, f.offset, f.width);
    }
    println!(
        "row {} bits = {} flows per 10MB",
        deployment.memory.row_bits, deployment.memory.flows_per_10mb
    );
    for e in &deployment.model_switch {
        println!("from packet {} use model {}", e.from_count, e.model);
    }
    for line in deployment.table_dump().lines().take(8) {
        println!("{line}");
    }
    Ok(())
}
