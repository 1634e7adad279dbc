//! Round-trips a small trace through the pcap writer and parser, then
//! groups packets into unidirectional flows and attaches labels.
//!
//! cargo run --example parse_and_assemble

use flowforest::synth::{two_class_packets, TraceConfig};
use flowforest::traffic::{assemble_flows, parse_pcap, write_pcap, LabeledDataset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = TraceConfig {
        flows: 6,
        ..TraceConfig::default()
    };
    let (packets, labels) = two_class_packets(&config);
    let bytes = write_pcap(&packets);
    let parsed = parse_pcap(&bytes)?;
    println!("{} bytes of pcap, {} packets parsed, {} skipped", bytes.len(), parsed.packets.len(), parsed.skipped);

    let flows = assemble_flows(&parsed.packets);
    let (ds, dropped) = LabeledDataset::from_flows(flows, &labels)?;
    println!("{} flows ({} unlabeled), classes {:?}", ds.flows.len(), dropped, ds.classes);
    for f in &ds.flows {
        let span = f.packets.last().unwrap().timestamp - f.packets[0].timestamp;
        println!(
            "{:<42} {:>3} packets over {:>8} us  label {}",
            f.key.to_string(),
            f.packets.len(),
            span,
            ds.classes[f.label.unwrap()]
        );
    }
    Ok(())
}
