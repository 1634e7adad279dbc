//! Shows the per-packet feature state of one flow as the switch would
//! maintain it: running min/max, shift-based moving averages and
//! saturating counters.
//!
//! cargo run --example incremental_features

use flowforest::features::{fold_packets, FeatureId};
use flowforest::synth::{two_class_trace, TraceConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = two_class_trace(&TraceConfig {
        flows: 2,
        min_packets: 8,
        max_packets: 8,
        ..TraceConfig::default()
    });
    let flow = &ds.flows[0];
    println!("flow {} ({})", flow.key, ds.classes[flow.label.unwrap()]);
    let shown = [
        FeatureId::PktCount,
        FeatureId::IatMin,
        FeatureId::IatAvg,
        FeatureId::LenAvg,
        FeatureId::LenTotal,
        FeatureId::PshCount,
        FeatureId::Duration,
    ];
    print!("{:>4} {:>6}", "pkt", "len");
    for f in shown {
        print!(" {:>10}", f.name());
    }
    println!();
    for (p, v) in flow.packets.iter().zip(fold_packets(&flow.packets)?) {
        print!("{:>4} {:>6}", v.value(FeatureId::PktCount), p.length);
        for f in shown {
            match v.get(f) {
                Some(x) => print!(" {x:>10}"),
                None => print!(" {:>10}", "-"),
            }
        }
        println!();
    }
    Ok(())
}
