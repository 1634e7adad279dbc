//! Writes a labeled two-class TCP trace as `trace.pcap` and `labels.csv`
//! into the given directory (default `data/`), ready for the CLI.
//!
//! cargo run --example synthetic_trace -- data 5000

use std::fs;
use std::path::PathBuf;

use flowforest::synth::{two_class_packets, TraceConfig};
use flowforest::traffic::{write_labels, write_pcap};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data".into()));
    let flows = args.next().map(|n| n.parse()).transpose()?.unwrap_or(5000);
    let config = TraceConfig {
        flows,
        ..TraceConfig::default()
    };
    let (packets, labels) = two_class_packets(&config);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("trace.pcap"), write_pcap(&packets))?;
    write_labels(fs::File::create(dir.join("labels.csv"))?, &labels)?;
    println!("{} packets in {} flows -> {}", packets.len(), labels.len(), dir.display());
    Ok(())
}
