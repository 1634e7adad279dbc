//! Per-flow statistics computed incrementally with the same integer
//! arithmetic a switch pipeline can afford: running min/max, add-then-shift
//! moving averages and saturating 7-bit counters.

mod matrix;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::traffic::{PacketRecord, TcpFlags};

pub use matrix::{
    build_context_dataset, extract_dataset, extract_full_flows, read_context_dir, read_matrix_csv,
    write_context_dir, write_matrix_csv, Column, ContextData, ContextDataset, FeatureMatrix, RawMatrix,
};

/// Largest value of a 7-bit counter.
pub const COUNTER_MAX: u64 = 127;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("packet timestamp {got} precedes previous packet at {last}")]
    NonMonotonicTimestamp { last: u64, got: u64 },
    #[error("no flow has at least {0} packets")]
    EmptyContext(usize),
    #[error("malformed feature csv at line {line}: {reason}")]
    MalformedCsv { line: u64, reason: String },
    #[error("no feature matrices found in {0}")]
    NoMatrices(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureId {
    IatMin,
    IatMax,
    IatAvg,
    LenMin,
    LenMax,
    LenAvg,
    LenTotal,
    PktCount,
    SynCount,
    AckCount,
    PshCount,
    FinCount,
    RstCount,
    EceCount,
    Duration,
    SrcPort,
    DstPort,
    CurLen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Min,
    Max,
    Ewma,
    Counter,
    Sum,
    Duration,
    Stateless,
}

const FLAG_FEATURES: [(FeatureId, TcpFlags); 6] = [
    (FeatureId::SynCount, TcpFlags::SYN),
    (FeatureId::AckCount, TcpFlags::ACK),
    (FeatureId::PshCount, TcpFlags::PSH),
    (FeatureId::FinCount, TcpFlags::FIN),
    (FeatureId::RstCount, TcpFlags::RST),
    (FeatureId::EceCount, TcpFlags::ECE),
];

impl FeatureId {
    pub const COUNT: usize = 18;

    pub const ALL: [FeatureId; Self::COUNT] = [
        FeatureId::IatMin,
        FeatureId::IatMax,
        FeatureId::IatAvg,
        FeatureId::LenMin,
        FeatureId::LenMax,
        FeatureId::LenAvg,
        FeatureId::LenTotal,
        FeatureId::PktCount,
        FeatureId::SynCount,
        FeatureId::AckCount,
        FeatureId::PshCount,
        FeatureId::FinCount,
        FeatureId::RstCount,
        FeatureId::EceCount,
        FeatureId::Duration,
        FeatureId::SrcPort,
        FeatureId::DstPort,
        FeatureId::CurLen,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureId::IatMin => "iat_min",
            FeatureId::IatMax => "iat_max",
            FeatureId::IatAvg => "iat_avg",
            FeatureId::LenMin => "len_min",
            FeatureId::LenMax => "len_max",
            FeatureId::LenAvg => "len_avg",
            FeatureId::LenTotal => "len_total",
            FeatureId::PktCount => "pkt_count",
            FeatureId::SynCount => "syn_count",
            FeatureId::AckCount => "ack_count",
            FeatureId::PshCount => "psh_count",
            FeatureId::FinCount => "fin_count",
            FeatureId::RstCount => "rst_count",
            FeatureId::EceCount => "ece_count",
            FeatureId::Duration => "duration",
            FeatureId::SrcPort => "src_port",
            FeatureId::DstPort => "dst_port",
            FeatureId::CurLen => "cur_len",
        }
    }

    pub fn kind(self) -> FeatureKind {
        use FeatureId::*;
        match self {
            IatMin | LenMin => FeatureKind::Min,
            IatMax | LenMax => FeatureKind::Max,
            IatAvg | LenAvg => FeatureKind::Ewma,
            LenTotal => FeatureKind::Sum,
            PktCount | SynCount | AckCount | PshCount | FinCount | RstCount | EceCount => {
                FeatureKind::Counter
            }
            Duration => FeatureKind::Duration,
            SrcPort | DstPort | CurLen => FeatureKind::Stateless,
        }
    }

    pub fn is_iat(self) -> bool {
        matches!(self, FeatureId::IatMin | FeatureId::IatMax | FeatureId::IatAvg)
    }

    /// Width of the unquantized value: 32-bit times and sums, 16-bit
    /// lengths and ports, 7-bit counters.
    pub fn native_bits(self) -> u32 {
        use FeatureId::*;
        match self {
            IatMin | IatMax | IatAvg | LenTotal | Duration => 32,
            LenMin | LenMax | LenAvg | SrcPort | DstPort | CurLen => 16,
            _ => 7,
        }
    }

    pub fn native_max(self) -> u64 {
        (1u64 << self.native_bits()) - 1
    }

    /// Packet count at which the feature first has a value.
    pub fn defined_from(self) -> usize {
        match self {
            FeatureId::IatMin | FeatureId::IatMax => 2,
            FeatureId::IatAvg => 3,
            _ => 1,
        }
    }

    /// Planning estimate of per-flow memory: nothing for stateless features,
    /// two guard bits on top of the native width for moving averages.
    pub fn memory_cost(self) -> u32 {
        match self.kind() {
            FeatureKind::Stateless => 0,
            FeatureKind::Ewma => self.native_bits() + 2,
            FeatureKind::Counter => 7,
            _ => self.native_bits(),
        }
    }

    /// Packets needed before the feature is meaningful.
    pub fn convergence_cost(self) -> u32 {
        match self {
            FeatureId::IatMin | FeatureId::IatMax => 2,
            FeatureId::IatAvg => 3,
            FeatureId::LenAvg => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureId::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown feature `{s}`"))
    }
}

/// Moving average with weight one half: `(prev + sample) >> 1`.
pub fn ewma_update(prev: u64, sample: u64) -> u64 {
    (prev + sample) >> 1
}

/// Running per-flow statistics. All fields are plain integers; the packet
/// counter is kept unsaturated for bookkeeping and clamped when read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureState {
    pub packets: u64,
    pub first_ts: u64,
    pub last_ts: u64,
    pub iat_min: u64,
    pub iat_max: u64,
    pub iat_avg: u64,
    pub len_min: u64,
    pub len_max: u64,
    pub len_avg: u64,
    pub len_total: u64,
    pub flags: [u64; 6],
    pub duration: u64,
}

pub fn init_state(first: &PacketRecord) -> FeatureState {
    let len = (first.length as u64).min(FeatureId::LenMin.native_max());
    let mut flags = [0u64; 6];
    for (slot, (_, flag)) in flags.iter_mut().zip(FLAG_FEATURES) {
        *slot = first.tcp_flags.contains(flag) as u64;
    }
    FeatureState {
        packets: 1,
        first_ts: first.timestamp,
        last_ts: first.timestamp,
        iat_min: 0,
        iat_max: 0,
        iat_avg: 0,
        len_min: len,
        len_max: len,
        len_avg: len,
        len_total: len,
        flags,
        duration: 0,
    }
}

pub fn update_state(state: &FeatureState, packet: &PacketRecord) -> Result<FeatureState, FeatureError> {
    if packet.timestamp < state.last_ts {
        return Err(FeatureError::NonMonotonicTimestamp {
            last: state.last_ts,
            got: packet.timestamp,
        });
    }
    let time_max = FeatureId::Duration.native_max();
    let iat = (packet.timestamp - state.last_ts).min(time_max);
    let len = (packet.length as u64).min(FeatureId::LenMin.native_max());
    let mut next = state.clone();
    next.packets += 1;
    next.last_ts = packet.timestamp;
    if state.packets == 1 {
        next.iat_min = iat;
        next.iat_max = iat;
        next.iat_avg = iat;
    } else {
        next.iat_min = state.iat_min.min(iat);
        next.iat_max = state.iat_max.max(iat);
        next.iat_avg = ewma_update(state.iat_avg, iat);
    }
    next.len_min = state.len_min.min(len);
    next.len_max = state.len_max.max(len);
    next.len_avg = ewma_update(state.len_avg, len);
    next.len_total = (state.len_total + len).min(FeatureId::LenTotal.native_max());
    for (slot, (_, flag)) in next.flags.iter_mut().zip(FLAG_FEATURES) {
        if packet.tcp_flags.contains(flag) {
            *slot = (*slot + 1).min(COUNTER_MAX);
        }
    }
    next.duration = (packet.timestamp - state.first_ts).min(time_max);
    Ok(next)
}

/// Snapshot of all features after some prefix of a flow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [u64; FeatureId::COUNT],
    pub defined: [bool; FeatureId::COUNT],
}

impl FeatureVector {
    pub fn get(&self, id: FeatureId) -> Option<u64> {
        self.defined[id.index()].then_some(self.values[id.index()])
    }

    pub fn value(&self, id: FeatureId) -> u64 {
        self.values[id.index()]
    }
}

pub fn feature_vector(state: &FeatureState, current: &PacketRecord) -> FeatureVector {
    let mut values = [0u64; FeatureId::COUNT];
    let mut defined = [true; FeatureId::COUNT];
    for id in FeatureId::ALL {
        let v = match id {
            FeatureId::IatMin => state.iat_min,
            FeatureId::IatMax => state.iat_max,
            FeatureId::IatAvg => state.iat_avg,
            FeatureId::LenMin => state.len_min,
            FeatureId::LenMax => state.len_max,
            FeatureId::LenAvg => state.len_avg,
            FeatureId::LenTotal => state.len_total,
            FeatureId::PktCount => state.packets.min(COUNTER_MAX),
            FeatureId::Duration => state.duration,
            FeatureId::SrcPort => current.key.src_port as u64,
            FeatureId::DstPort => current.key.dst_port as u64,
            FeatureId::CurLen => (current.length as u64).min(FeatureId::CurLen.native_max()),
            flag_id => {
                let pos = FLAG_FEATURES.iter().position(|(f, _)| *f == flag_id).expect("flag feature");
                state.flags[pos]
            }
        };
        values[id.index()] = v;
        defined[id.index()] = state.packets >= id.defined_from() as u64;
    }
    FeatureVector { values, defined }
}

/// Feature vectors after each packet of `packets`, in order.
pub fn fold_packets(packets: &[PacketRecord]) -> Result<Vec<FeatureVector>, FeatureError> {
    let mut out = Vec::with_capacity(packets.len());
    let Some(first) = packets.first() else {
        return Ok(out);
    };
    let mut state = init_state(first);
    out.push(feature_vector(&state, first));
    for p in &packets[1..] {
        state = update_state(&state, p)?;
        out.push(feature_vector(&state, p));
    }
    Ok(out)
}

/// Feature vector after the whole of `packets` (which must be non-empty).
pub fn fold_prefix(packets: &[PacketRecord]) -> Result<FeatureVector, FeatureError> {
    let first = packets.first().expect("non-empty packet list");
    let mut state = init_state(first);
    for p in &packets[1..] {
        state = update_state(&state, p)?;
    }
    Ok(feature_vector(&state, packets.last().expect("non-empty")))
}
