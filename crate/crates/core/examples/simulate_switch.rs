//! Replays a trace through the switch model twice: once with plenty of
//! register rows and once with too few, to show table-full behavior.
//!
//! cargo run --release --example simulate_switch

use flowforest::compiler::{compile_classifier, CompileOptions};
use flowforest::dataplane::{replay, Switch, SwitchOptions};
use flowforest::features::build_context_dataset;
use flowforest::synth::{two_class_trace, TraceConfig};
use flowforest::trainer::{train_classifier, TrainerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = two_class_trace(&TraceConfig {
        flows: 2000,
        span_us: 2_000_000,
        ..TraceConfig::default()
    });
    let data = build_context_dataset(&ds, &[1, 2, 3, 4, 5])?;
    let (clf, _) = train_classifier(&data, &TrainerConfig::default())?;
    let options = CompileOptions {
        thr_c: Some(0.99),
        ..CompileOptions::default()
    };
    let deployment = compile_classifier(&clf, &options)?;
    let packets = ds.packets_in_time_order();

    for rows in [1 << 16, 16] {
        let mut switch = Switch::new(
            deployment.clone(),
            SwitchOptions {
                rows,
                ..SwitchOptions::default()
            },
        )?;
        let stats = replay(&mut switch, &packets, &ds.label_map())?;
        println!(
            "{rows:>6} rows: {:.1}% classified, F1 {:.3}, {} unclassified, {} pending, table full {} times",
            stats.classified_pct,
            stats.f1_classified,
            stats.unclassified_flows,
            stats.pending_flows,
            stats.counters.table_full
        );
        for c in stats.contexts.iter().filter(|c| c.classified > 0) {
            println!("    after {} packets: +{:.1}% (cumulative {:.1}%)", c.packet_count, c.classified_pct, c.cumulative_pct);
        }
    }
    Ok(())
}
