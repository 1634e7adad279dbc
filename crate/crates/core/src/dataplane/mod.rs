//! Software model of the switch: a fixed register array indexed by hashed
//! flow ids, per-packet feature updates on the packed layout, a level-by-
//! level table walk per tree, and certainty-gated eviction.

mod replay;

use std::collections::HashMap;
use std::io::Cursor;

use serde::{Deserialize, Serialize};

use crate::compiler::{
    aggregate_quantized, quantize_value, BitString, DeploymentConfig, FieldEncoding, MissingEntry, TableAction,
};
use crate::features::{ewma_update, Column, FeatureId, FeatureKind, COUNTER_MAX};
use crate::forest::mix_seed;
use crate::traffic::{FlowKey, PacketRecord, TcpFlags};

pub use replay::{replay, write_verdicts_csv, ContextStats, FlowFate, PacketVerdict, SimulationStats};

pub const DEFAULT_ROWS: usize = 1 << 16;
pub const DEFAULT_PROBES: usize = 3;
/// Fits below the wrap horizon of the stored timestamp.
pub const DEFAULT_TIMEOUT_US: u64 = 8_000_000;
pub const TIMESTAMP_BITS: u32 = 17;
/// The stored timestamp counts units of `2^TICK_SHIFT` microseconds.
pub const TICK_SHIFT: u32 = 6;

const TICK_MASK: u64 = (1 << TIMESTAMP_BITS) - 1;

#[derive(Debug, thiserror::Error)]
pub enum DataplaneError {
    #[error("feature `{0}` is not computed on the switch")]
    ExternalFeature(String),
    #[error("invalid switch options: {0}")]
    InvalidOptions(String),
    #[error("no table entry at level {} for node {} / {}", .0.level, .0.node, .0.result)]
    MissingEntry(MissingEntry),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchOptions {
    pub rows: usize,
    pub probes: usize,
    pub timeout_us: u64,
    pub seed: u32,
}

impl Default for SwitchOptions {
    fn default() -> Self {
        SwitchOptions {
            rows: DEFAULT_ROWS,
            probes: DEFAULT_PROBES,
            timeout_us: DEFAULT_TIMEOUT_US,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRow {
    pub valid: bool,
    pub flow_id: u32,
    /// Arrival of the last packet in ticks, wrapping at `TIMESTAMP_BITS`.
    pub last_ticks: u32,
    pub count: u8,
    pub features: BitString,
}

impl FlowRow {
    fn empty(bits: u32) -> Self {
        FlowRow {
            valid: false,
            flow_id: 0,
            last_ticks: 0,
            count: 0,
            features: BitString::zeros(bits),
        }
    }

    fn clear(&mut self) {
        self.valid = false;
        self.flow_id = 0;
        self.last_ticks = 0;
        self.count = 0;
        self.features.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Hit(usize),
    Allocated(usize),
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Classified { label: usize, certainty: u8 },
    /// A model ran but its certainty was below the threshold.
    Pending { label: usize, certainty: u8 },
    NoModel,
    /// No row was available; the packet leaves with the unclassified flag.
    Unclassified,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchCounters {
    pub packets: u64,
    pub classified: u64,
    pub pending: u64,
    pub no_model_yet: u64,
    pub table_full: u64,
    /// Rows of idle flows taken over by new flows.
    pub evicted: u64,
    pub hash_hits: u64,
    /// New flows whose first probe was held by another live flow.
    pub collisions: u64,
}

pub fn flow_hash(bytes: &[u8], seed: u32) -> u32 {
    murmur3::murmur3_32(&mut Cursor::new(bytes), seed).expect("reading from memory")
}

type LevelTable = HashMap<(u32, bool), (u32, TableAction)>;

/// Per-packet source of a layout field update.
#[derive(Debug, Clone, Copy)]
enum Update {
    Arrival,
    Min(Sample, usize),
    Max(Sample, usize),
    Counter(TcpFlags, usize),
    Sum(Sample),
    Average(Sample),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sample {
    Length,
    Iat,
}

/// How a quantization slot is read during classification.
#[derive(Debug, Clone, Copy)]
enum Read {
    Stored(usize),
    Raw(usize),
    Count,
    Packet(FeatureId),
}

pub struct Switch {
    config: DeploymentConfig,
    options: SwitchOptions,
    rows: Vec<FlowRow>,
    probe_seeds: Vec<u32>,
    tables: Vec<Vec<Vec<LevelTable>>>,
    updates: Vec<(usize, Update)>,
    reads: Vec<Read>,
    counters: SwitchCounters,
}

fn flag_of(f: FeatureId) -> Option<TcpFlags> {
    Some(match f {
        FeatureId::SynCount => TcpFlags::SYN,
        FeatureId::AckCount => TcpFlags::ACK,
        FeatureId::PshCount => TcpFlags::PSH,
        FeatureId::FinCount => TcpFlags::FIN,
        FeatureId::RstCount => TcpFlags::RST,
        FeatureId::EceCount => TcpFlags::ECE,
        _ => return None,
    })
}

fn sample_of(f: FeatureId) -> Sample {
    if f.is_iat() || f == FeatureId::Duration {
        Sample::Iat
    } else {
        Sample::Length
    }
}

impl Switch {
    pub fn new(config: DeploymentConfig, options: SwitchOptions) -> Result<Self, DataplaneError> {
        if options.rows == 0 || options.probes == 0 {
            return Err(DataplaneError::InvalidOptions("rows and probes must be at least 1".into()));
        }
        if options.timeout_us >> TICK_SHIFT >= 1 << TIMESTAMP_BITS {
            return Err(DataplaneError::InvalidOptions(format!(
                "timeout of {} us exceeds the {}-bit timestamp range",
                options.timeout_us, TIMESTAMP_BITS
            )));
        }
        if let Some(s) = config.quant.iter().find(|s| matches!(s.column, Column::External(_))) {
            return Err(DataplaneError::ExternalFeature(s.column.to_string()));
        }

        let mut updates = Vec::new();
        let mut stored = HashMap::new();
        for (i, field) in config.layout.fields.iter().enumerate() {
            let update = match (field.encoding, field.column.as_ref().and_then(Column::feature)) {
                (FieldEncoding::LastArrival, _) => Update::Arrival,
                (_, None) => unreachable!("external columns rejected above"),
                (FieldEncoding::Quantized, Some(f)) => {
                    let spec = field.spec.expect("quantized field has a spec");
                    match f.kind() {
                        FeatureKind::Min => Update::Min(sample_of(f), spec),
                        FeatureKind::Max => Update::Max(sample_of(f), spec),
                        _ => Update::Counter(flag_of(f).expect("flag counter"), spec),
                    }
                }
                (FieldEncoding::Accumulator, Some(f)) => Update::Sum(sample_of(f)),
                (FieldEncoding::Average, Some(f)) => Update::Average(sample_of(f)),
            };
            if let Some(spec) = field.spec {
                stored.insert(spec, (i, field.encoding));
            }
            updates.push((i, update));
        }
        let reads = config
            .quant
            .iter()
            .enumerate()
            .map(|(slot, s)| match stored.get(&slot) {
                Some(&(i, FieldEncoding::Quantized)) => Read::Stored(i),
                Some(&(i, _)) => Read::Raw(i),
                None => match s.column.feature() {
                    Some(FeatureId::PktCount) => Read::Count,
                    Some(f) => Read::Packet(f),
                    None => unreachable!("external columns rejected above"),
                },
            })
            .collect();

        let tables = config
            .models
            .iter()
            .map(|m| {
                m.trees
                    .iter()
                    .map(|t| {
                        t.levels
                            .iter()
                            .map(|entries| {
                                entries
                                    .iter()
                                    .map(|e| ((e.prev_node, e.prev_result), (e.node, e.action.clone())))
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let probe_seeds = (0..options.probes)
            .map(|i| mix_seed(options.seed as u64, i as u64 + 1) as u32)
            .collect();
        let bits = config.layout.total_bits;
        Ok(Switch {
            rows: vec![FlowRow::empty(bits); options.rows],
            config,
            options,
            probe_seeds,
            tables,
            updates,
            reads,
            counters: SwitchCounters::default(),
        })
    }

    pub fn config(&self) -> &DeploymentConfig {
        &self.config
    }

    pub fn options(&self) -> &SwitchOptions {
        &self.options
    }

    pub fn counters(&self) -> &SwitchCounters {
        &self.counters
    }

    pub fn row(&self, index: usize) -> &FlowRow {
        &self.rows[index]
    }

    pub fn occupied_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.valid).count()
    }

    /// Register memory in bits for all rows.
    pub fn memory_bits(&self) -> u64 {
        self.rows.len() as u64 * self.config.memory.row_bits as u64
    }

    pub fn flow_id(&self, key: &FlowKey) -> u32 {
        flow_hash(&key.to_bytes(), self.options.seed)
    }

    pub fn probes(&self, flow_id: u32) -> Vec<usize> {
        let bytes = flow_id.to_le_bytes();
        self.probe_seeds
            .iter()
            .map(|&s| flow_hash(&bytes, s) as usize % self.rows.len())
            .collect()
    }

    fn idle(&self, row: &FlowRow, now_us: u64) -> bool {
        let now = (now_us >> TICK_SHIFT) & TICK_MASK;
        let elapsed = now.wrapping_sub(row.last_ticks as u64) & TICK_MASK;
        elapsed << TICK_SHIFT > self.options.timeout_us
    }

    /// Finds the row of `key`, or claims an empty or idle one.
    pub fn lookup_or_allocate(&mut self, key: &FlowKey, now_us: u64) -> Slot {
        let id = self.flow_id(key);
        let probes = self.probes(id);
        if let Some(&i) = probes.iter().find(|&&i| self.rows[i].valid && self.rows[i].flow_id == id) {
            self.counters.hash_hits += 1;
            return Slot::Hit(i);
        }
        let Some(&i) = probes
            .iter()
            .find(|&&i| !self.rows[i].valid || self.idle(&self.rows[i], now_us))
        else {
            self.counters.collisions += 1;
            self.counters.table_full += 1;
            return Slot::Full;
        };
        if i != probes[0] {
            self.counters.collisions += 1;
        }
        if self.rows[i].valid {
            self.counters.evicted += 1;
        }
        let row = &mut self.rows[i];
        row.clear();
        row.valid = true;
        row.flow_id = id;
        Slot::Allocated(i)
    }

    fn update_row(&mut self, index: usize, p: &PacketRecord) {
        let arrival = self.config.layout.arrival().map(|f| self.rows[index].features.get(f.offset, f.width));
        let row = &mut self.rows[index];
        let prev = row.count;
        let len = (p.length as u64).min(FeatureId::LenMin.native_max());
        let iat = match arrival {
            Some(last) if prev > 0 => (p.timestamp as u32).wrapping_sub(last as u32) as u64,
            _ => 0,
        };
        for &(i, update) in &self.updates {
            let field = &self.config.layout.fields[i];
            let old = row.features.get(field.offset, field.width);
            let sample = |s: Sample| if s == Sample::Length { len } else { iat };
            // IAT statistics start with the second packet.
            let starts = |s: Sample| if s == Sample::Length { 0 } else { 1 };
            let new = match update {
                Update::Arrival => p.timestamp as u32 as u64,
                Update::Min(s, spec) | Update::Max(s, spec) => {
                    let q = quantize_value(sample(s), &self.config.quant[spec]);
                    if prev < starts(s) {
                        0
                    } else if prev == starts(s) {
                        q
                    } else if matches!(update, Update::Min(..)) {
                        old.min(q)
                    } else {
                        old.max(q)
                    }
                }
                Update::Counter(flag, spec) => {
                    let qs = &self.config.quant[spec];
                    if old == qs.max_value() {
                        old
                    } else {
                        let count = if qs.shift <= 0 { old >> qs.shift.unsigned_abs() } else { old };
                        let next = (count + p.tcp_flags.contains(flag) as u64).min(COUNTER_MAX);
                        quantize_value(next, qs)
                    }
                }
                Update::Sum(s) => {
                    let cap = field.max_value().min(field_native_max(field));
                    if prev < starts(s) {
                        0
                    } else {
                        (old + sample(s)).min(cap)
                    }
                }
                Update::Average(s) => {
                    if prev < starts(s) {
                        0
                    } else if prev == starts(s) {
                        sample(s)
                    } else {
                        ewma_update(old, sample(s))
                    }
                }
            };
            row.features.set(field.offset, field.width, new);
        }
        row.count = (prev as u64 + 1).min(COUNTER_MAX) as u8;
        row.last_ticks = ((p.timestamp >> TICK_SHIFT) & TICK_MASK) as u32;
    }

    /// Quantized slot values of row `index` for the packet `p`.
    pub fn quantized_features(&self, index: usize, p: &PacketRecord) -> Vec<u64> {
        let row = &self.rows[index];
        self.reads
            .iter()
            .zip(&self.config.quant)
            .map(|(read, spec)| match *read {
                Read::Stored(i) => {
                    let f = &self.config.layout.fields[i];
                    row.features.get(f.offset, f.width)
                }
                Read::Raw(i) => {
                    let f = &self.config.layout.fields[i];
                    quantize_value(row.features.get(f.offset, f.width), spec)
                }
                Read::Count => quantize_value(row.count as u64, spec),
                Read::Packet(f) => {
                    let v = match f {
                        FeatureId::SrcPort => p.key.src_port as u64,
                        FeatureId::DstPort => p.key.dst_port as u64,
                        _ => (p.length as u64).min(f.native_max()),
                    };
                    quantize_value(v, spec)
                }
            })
            .collect()
    }

    /// Per-tree outputs of compiled model `model`.
    pub fn table_walk(&self, model: usize, q: &[u64]) -> Result<Vec<(usize, u8)>, DataplaneError> {
        self.tables[model]
            .iter()
            .map(|levels| {
                let (mut node, mut result) = (0u32, false);
                let mut out = None;
                for (level, table) in levels.iter().enumerate() {
                    let (next, action) = table
                        .get(&(node, result))
                        .ok_or(DataplaneError::MissingEntry(MissingEntry { level, node, result }))?;
                    node = *next;
                    match *action {
                        TableAction::Split { feature, threshold } => {
                            result = q[feature] > threshold;
                            out = None;
                        }
                        TableAction::Leaf { label, certainty } => {
                            result = false;
                            out = Some((label, certainty));
                        }
                    }
                }
                out.ok_or(DataplaneError::MissingEntry(MissingEntry {
                    level: levels.len(),
                    node,
                    result,
                }))
            })
            .collect()
    }

    /// Runs one packet through the pipeline. Returns the verdict and the
    /// packet count of the flow's row after the update.
    pub fn process_packet(&mut self, p: &PacketRecord) -> Result<(Verdict, u8), DataplaneError> {
        self.counters.packets += 1;
        let index = match self.lookup_or_allocate(&p.key, p.timestamp) {
            Slot::Hit(i) | Slot::Allocated(i) => i,
            Slot::Full => return Ok((Verdict::Unclassified, 0)),
        };
        self.update_row(index, p);
        let count = self.rows[index].count;
        let Some(model) = self.config.model_for(count as usize) else {
            self.counters.no_model_yet += 1;
            return Ok((Verdict::NoModel, count));
        };
        let q = self.quantized_features(index, p);
        let votes = self.table_walk(model, &q)?;
        let (label, certainty) = aggregate_quantized(&votes, self.config.classes.len());
        if certainty as u32 >= self.config.thr_c_q {
            self.counters.classified += 1;
            self.rows[index].clear();
            Ok((Verdict::Classified { label, certainty }, count))
        } else {
            self.counters.pending += 1;
            Ok((Verdict::Pending { label, certainty }, count))
        }
    }
}

fn field_native_max(field: &crate::compiler::LayoutField) -> u64 {
    field
        .column
        .as_ref()
        .and_then(Column::feature)
        .map_or(u64::MAX, FeatureId::native_max)
}
