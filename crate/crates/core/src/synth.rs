//! Seeded dataset generators used by the examples and tests.
//!
//! [`two_class_trace`] produces packet-level TCP traffic for two classes
//! that differ in packet size and pacing. [`phased_contexts`] produces
//! feature-only data whose informative columns change with the packet
//! count, plus columns that carry no label information at all.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::{Column, ContextData, ContextDataset, FeatureMatrix};
use crate::traffic::{assemble_flows, FlowKey, LabeledDataset, PacketRecord, TcpFlags, PROTO_TCP};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceConfig {
    pub flows: usize,
    pub seed: u64,
    pub min_packets: usize,
    pub max_packets: usize,
    /// Flow start times are spread uniformly over this window.
    pub span_us: u64,
    /// Mean inter-arrival time per class.
    pub mean_iat_us: [f64; 2],
    /// Inclusive packet length range per class.
    pub length_range: [(u32, u32); 2],
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            flows: 5000,
            seed: 42,
            min_packets: 4,
            max_packets: 40,
            span_us: 60_000_000,
            mean_iat_us: [1_000.0, 20_000.0],
            length_range: [(60, 220), (200, 400)],
        }
    }
}

pub const TRACE_CLASSES: [&str; 2] = ["bulk", "interactive"];

fn exp_sample(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    (-u.ln() * mean).round().max(1.0) as u64
}

/// Packets of both classes interleaved in time order, with their labels.
pub fn two_class_packets(config: &TraceConfig) -> (Vec<PacketRecord>, BTreeMap<FlowKey, String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut packets = Vec::new();
    let mut labels = BTreeMap::new();
    for f in 0..config.flows {
        let class = f % 2;
        let key = FlowKey {
            src_ip: Ipv4Addr::from(0x0a00_0000u32 + f as u32 + 1),
            dst_ip: Ipv4Addr::new(192, 168, (f % 7) as u8, 1 + (f % 200) as u8),
            src_port: rng.gen_range(1024..=65535),
            dst_port: rng.gen_range(1..=65535),
            protocol: PROTO_TCP,
        };
        labels.insert(key, TRACE_CLASSES[class].to_string());
        let n = rng.gen_range(config.min_packets..=config.max_packets);
        let (lo, hi) = config.length_range[class];
        let mut ts = rng.gen_range(0..config.span_us.max(1));
        for i in 0..n {
            if i > 0 {
                ts += exp_sample(&mut rng, config.mean_iat_us[class]);
            }
            let tcp_flags = match i {
                0 => TcpFlags::SYN,
                _ if rng.gen_bool(0.3) => TcpFlags::ACK | TcpFlags::PSH,
                _ => TcpFlags::ACK,
            };
            packets.push(PacketRecord {
                timestamp: ts,
                key,
                length: rng.gen_range(lo..=hi),
                tcp_flags,
            });
        }
    }
    packets.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.key.cmp(&b.key)));
    let base = packets.first().map_or(0, |p| p.timestamp);
    for p in &mut packets {
        p.timestamp -= base;
    }
    (packets, labels)
}

pub fn two_class_trace(config: &TraceConfig) -> LabeledDataset {
    let (packets, labels) = two_class_packets(config);
    LabeledDataset::from_flows(assemble_flows(&packets), &labels)
        .expect("generated flows are labeled")
        .0
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhasedConfig {
    pub flows: usize,
    pub seed: u64,
    /// Probability that a flow's informative pair disagrees with its label.
    pub label_noise: f64,
    /// Informative column pair for each packet count 1, 2, ...
    pub phases: Vec<(usize, usize)>,
    pub informative: usize,
    pub noise: usize,
}

impl Default for PhasedConfig {
    fn default() -> Self {
        PhasedConfig {
            flows: 2000,
            seed: 7,
            label_noise: 0.1,
            phases: vec![(0, 1), (0, 1), (0, 1), (0, 1), (2, 3), (2, 3), (0, 1), (4, 5), (4, 5)],
            informative: 6,
            noise: 4,
        }
    }
}

impl PhasedConfig {
    pub fn columns(&self) -> Vec<Column> {
        (0..self.informative)
            .map(|i| Column::External(format!("F{i}")))
            .chain((0..self.noise).map(|i| Column::External(format!("N{i}"))))
            .collect()
    }
}

fn scaled(u: f64) -> f64 {
    1.0 + (u * 1000.0).floor()
}

/// Feature-only contexts. In each context the label is `[a + b > 1]` for
/// the phase's informative pair `(a, b)` drawn uniformly from the unit
/// square (flipped with probability `label_noise`); every other column is
/// uniform noise. Values are scaled to integers in `1..=1000`.
pub fn phased_contexts(config: &PhasedConfig) -> ContextDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let columns = config.columns();
    let width = columns.len();
    let y: Vec<usize> = (0..config.flows).map(|i| i % 2).collect();
    let row_ids: Vec<String> = (0..config.flows).map(|i| format!("s{i}")).collect();
    let mut contexts = Vec::new();
    for (p, &(fa, fb)) in config.phases.iter().enumerate() {
        let mut rows = Vec::with_capacity(config.flows);
        for &label in &y {
            let mut row: Vec<f64> = (0..width).map(|_| scaled(rng.gen())).collect();
            let target = if rng.gen_bool(config.label_noise) { 1 - label } else { label };
            let (a, b) = loop {
                let (a, b): (f64, f64) = (rng.gen(), rng.gen());
                if ((a + b > 1.0) as usize) == target {
                    break (a, b);
                }
            };
            row[fa] = scaled(a);
            row[fb] = scaled(b);
            rows.push(row);
        }
        let mut x = FeatureMatrix::from_rows(columns.clone(), &rows);
        x.row_ids = row_ids.clone();
        contexts.push(ContextData {
            packet_count: p + 1,
            x,
            y: y.clone(),
            short_flows: 0,
        });
    }
    let full = contexts.last().cloned().expect("at least one phase");
    ContextDataset {
        classes: vec!["negative".into(), "positive".into()],
        columns,
        contexts,
        full: ContextData { packet_count: 0, ..full },
    }
}
