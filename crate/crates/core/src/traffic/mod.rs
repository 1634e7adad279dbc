//! Packet records, 5-tuple flows and labeled datasets.
//!
//! Captures come in either as classic pcap (Ethernet, IPv4 only) or as a
//! packet CSV. Both are normalized to [`PacketRecord`]s whose timestamps are
//! microseconds relative to the first record of the capture.

mod csv_io;
mod pcap;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use csv_io::{read_labels, read_packet_csv, write_labels, write_packet_csv};
pub use pcap::{parse_pcap, write_pcap};

pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;

#[derive(Debug, thiserror::Error)]
pub enum TrafficError {
    #[error("malformed capture at byte {offset}: {reason}")]
    MalformedCapture { offset: usize, reason: String },
    #[error("unsupported link type {0} (only Ethernet is supported)")]
    UnsupportedLinkType(u32),
    #[error("malformed csv at line {line}: {reason}")]
    MalformedCsv { line: u64, reason: String },
    #[error("dataset has no labeled flows")]
    NoLabeledFlows,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// TCP flags tracked by the feature pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const FIN: TcpFlags = TcpFlags(0x01);
    pub const SYN: TcpFlags = TcpFlags(0x02);
    pub const RST: TcpFlags = TcpFlags(0x04);
    pub const PSH: TcpFlags = TcpFlags(0x08);
    pub const ACK: TcpFlags = TcpFlags(0x10);
    pub const ECE: TcpFlags = TcpFlags(0x40);

    const NAMED: [(TcpFlags, &'static str); 6] = [
        (Self::SYN, "SYN"),
        (Self::ACK, "ACK"),
        (Self::PSH, "PSH"),
        (Self::FIN, "FIN"),
        (Self::RST, "RST"),
        (Self::ECE, "ECE"),
    ];
    const MASK: u8 = 0x5f;

    pub const fn empty() -> Self {
        TcpFlags(0)
    }

    /// Keeps only the tracked bits of a raw TCP flags byte.
    pub const fn from_bits_truncate(bits: u8) -> Self {
        TcpFlags(bits & Self::MASK)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn contains(self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl std::ops::BitOr for TcpFlags {
    type Output = TcpFlags;
    fn bitor(self, rhs: TcpFlags) -> TcpFlags {
        TcpFlags(self.0 | rhs.0)
    }
}

impl fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (flag, name) in Self::NAMED {
            if self.contains(flag) {
                if !first {
                    f.write_str("|")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        Ok(())
    }
}

impl FromStr for TcpFlags {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut flags = TcpFlags::empty();
        for part in s.split('|').map(str::trim).filter(|p| !p.is_empty()) {
            let (flag, _) = Self::NAMED
                .iter()
                .find(|(_, name)| name.eq_ignore_ascii_case(part))
                .ok_or_else(|| format!("unknown tcp flag `{part}`"))?;
            flags = flags | *flag;
        }
        Ok(flags)
    }
}

/// The 5-tuple identifying a unidirectional flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: u8,
}

impl FlowKey {
    /// Wire-order bytes of the tuple, the input to the data-plane flow hash.
    pub fn to_bytes(&self) -> [u8; 13] {
        let mut out = [0u8; 13];
        out[0..4].copy_from_slice(&self.src_ip.octets());
        out[4..8].copy_from_slice(&self.dst_ip.octets());
        out[8..10].copy_from_slice(&self.src_port.to_be_bytes());
        out[10..12].copy_from_slice(&self.dst_port.to_be_bytes());
        out[12] = self.protocol;
        out
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}-{}:{}/{}",
            self.src_ip, self.src_port, self.dst_ip, self.dst_port, self.protocol
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    /// Microseconds since the first packet of the capture.
    pub timestamp: u64,
    pub key: FlowKey,
    /// Length of the IP packet in bytes.
    pub length: u32,
    pub tcp_flags: TcpFlags,
}

/// Output of a capture parser: the kept packets plus how many were dropped
/// because they were not IPv4 TCP/UDP.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedCapture {
    pub packets: Vec<PacketRecord>,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureFormat {
    Pcap,
    Csv,
}

impl CaptureFormat {
    /// Guesses the format from a file name, defaulting to pcap.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CaptureFormat::Csv,
            _ => CaptureFormat::Pcap,
        }
    }
}

pub fn parse_capture(raw: &[u8], format: CaptureFormat) -> Result<ParsedCapture, TrafficError> {
    match format {
        CaptureFormat::Pcap => parse_pcap(raw),
        CaptureFormat::Csv => read_packet_csv(raw),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub key: FlowKey,
    pub packets: Vec<PacketRecord>,
    pub label: Option<usize>,
}

impl Flow {
    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }
}

/// The first `n` packets of a flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subflow<'a> {
    pub key: FlowKey,
    pub packets: &'a [PacketRecord],
    /// Set when the parent flow had at least `n` packets.
    pub truncated: bool,
}

impl<'a> Subflow<'a> {
    pub fn prefix(&self, n: usize) -> Subflow<'a> {
        assert!(n >= 1, "subflow length must be at least 1");
        let take = n.min(self.packets.len());
        Subflow {
            key: self.key,
            packets: &self.packets[..take],
            truncated: self.packets.len() >= n,
        }
    }
}

pub fn subflow(flow: &Flow, n: usize) -> Subflow<'_> {
    Subflow {
        key: flow.key,
        packets: &flow.packets,
        truncated: false,
    }
    .prefix(n)
}

/// Partitions packets by exact 5-tuple. Flows are returned in order of their
/// first packet; packets keep their capture order.
pub fn assemble_flows(packets: &[PacketRecord]) -> Vec<Flow> {
    let mut index: HashMap<FlowKey, usize> = HashMap::new();
    let mut flows: Vec<Flow> = Vec::new();
    for packet in packets {
        let slot = *index.entry(packet.key).or_insert_with(|| {
            flows.push(Flow {
                key: packet.key,
                packets: Vec::new(),
                label: None,
            });
            flows.len() - 1
        });
        flows[slot].packets.push(packet.clone());
    }
    for flow in &mut flows {
        // stable: equal timestamps keep capture order
        flow.packets.sort_by_key(|p| p.timestamp);
    }
    flows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub flows: Vec<Flow>,
    pub classes: Vec<String>,
}

impl LabeledDataset {
    /// Attaches labels to flows. Flows without a label are dropped; the
    /// second value is how many were dropped. Classes are sorted by name so
    /// class ids do not depend on label file order.
    pub fn from_flows(
        flows: Vec<Flow>,
        labels: &BTreeMap<FlowKey, String>,
    ) -> Result<(Self, usize), TrafficError> {
        let classes: Vec<String> = {
            let keys: BTreeSet<&FlowKey> = flows.iter().map(|f| &f.key).collect();
            let used: BTreeSet<&String> = labels
                .iter()
                .filter(|(k, _)| keys.contains(k))
                .map(|(_, v)| v)
                .collect();
            used.into_iter().cloned().collect()
        };
        let mut dropped = 0;
        let mut kept = Vec::with_capacity(flows.len());
        for mut flow in flows {
            match labels.get(&flow.key) {
                Some(name) => {
                    flow.label = Some(classes.binary_search(name).expect("class collected above"));
                    kept.push(flow);
                }
                None => dropped += 1,
            }
        }
        if kept.is_empty() {
            return Err(TrafficError::NoLabeledFlows);
        }
        Ok((LabeledDataset { flows: kept, classes }, dropped))
    }

    pub fn labels(&self) -> Vec<usize> {
        self.flows
            .iter()
            .map(|f| f.label.expect("labeled dataset"))
            .collect()
    }

    /// Every packet of every flow, merged back into timestamp order.
    pub fn packets_in_time_order(&self) -> Vec<PacketRecord> {
        let mut all: Vec<PacketRecord> = self.flows.iter().flat_map(|f| f.packets.iter().cloned()).collect();
        all.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.key.cmp(&b.key)));
        all
    }

    pub fn label_map(&self) -> BTreeMap<FlowKey, String> {
        self.flows
            .iter()
            .map(|f| (f.key, self.classes[f.label.expect("labeled dataset")].clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(port: u16) -> FlowKey {
        FlowKey {
            src_ip: Ipv4Addr::new(10, 0, 0, 1),
            dst_ip: Ipv4Addr::new(10, 0, 0, 2),
            src_port: port,
            dst_port: 80,
            protocol: PROTO_TCP,
        }
    }

    fn pkt(ts: u64, port: u16) -> PacketRecord {
        PacketRecord {
            timestamp: ts,
            key: key(port),
            length: 60,
            tcp_flags: TcpFlags::ACK,
        }
    }

    #[test]
    fn assemble_empty() {
        assert!(assemble_flows(&[]).is_empty());
    }

    #[test]
    fn assemble_partitions_by_key() {
        let flows = assemble_flows(&[pkt(0, 1), pkt(1, 2), pkt(2, 1)]);
        let sizes: Vec<usize> = flows.iter().map(Flow::len).collect();
        assert_eq!(sizes, vec![2, 1]);
    }

    #[test]
    fn reverse_direction_is_a_different_flow() {
        let a = pkt(0, 1);
        let mut b = a.clone();
        std::mem::swap(&mut b.key.src_ip, &mut b.key.dst_ip);
        std::mem::swap(&mut b.key.src_port, &mut b.key.dst_port);
        assert_eq!(assemble_flows(&[a, b]).len(), 2);
    }

    #[test]
    fn subflow_truncation() {
        let flow = Flow {
            key: key(1),
            packets: (0..9).map(|t| pkt(t, 1)).collect(),
            label: None,
        };
        let s = subflow(&flow, 3);
        assert_eq!(s.packets.len(), 3);
        assert!(s.truncated);

        let short = Flow {
            packets: flow.packets[..2].to_vec(),
            ..flow.clone()
        };
        let s = subflow(&short, 5);
        assert_eq!(s.packets.len(), 2);
        assert!(!s.truncated);

        assert_eq!(subflow(&flow, 5).prefix(3).packets, subflow(&flow, 3).packets);
    }

    #[test]
    fn flags_round_trip_text() {
        let f: TcpFlags = "SYN|ACK".parse().unwrap();
        assert!(f.contains(TcpFlags::SYN) && f.contains(TcpFlags::ACK));
        assert_eq!(f.to_string(), "SYN|ACK");
        assert_eq!("".parse::<TcpFlags>().unwrap(), TcpFlags::empty());
        assert!("URG".parse::<TcpFlags>().is_err());
    }

    #[test]
    fn labels_sort_classes_and_drop_unlabeled() {
        let flows = assemble_flows(&[pkt(0, 1), pkt(1, 2), pkt(2, 3)]);
        let mut labels = BTreeMap::new();
        labels.insert(key(1), "web".to_string());
        labels.insert(key(2), "dns".to_string());
        let (ds, dropped) = LabeledDataset::from_flows(flows, &labels).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(ds.classes, vec!["dns", "web"]);
        assert_eq!(ds.labels(), vec![1, 0]);
    }
}
