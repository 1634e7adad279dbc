use serde::{Deserialize, Serialize};

use super::quant::QuantSpec;
use crate::features::{Column, FeatureId, FeatureKind};

/// How a stateful field is maintained by the switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldEncoding {
    /// Running min/max or counter kept directly in the quantized domain.
    Quantized,
    /// Raw running sum that saturates at the field width; quantized on read.
    Accumulator,
    /// Raw moving average at native width; quantized on read.
    Average,
    /// Arrival time of the previous packet in microseconds, truncated to
    /// 32 bits.
    LastArrival,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutField {
    /// Feature stored here, or `None` for the arrival timestamp.
    pub column: Option<Column>,
    /// Index into the deployment's quantization list.
    pub spec: Option<usize>,
    pub encoding: FieldEncoding,
    pub offset: u32,
    pub width: u32,
}

impl LayoutField {
    pub fn name(&self) -> &str {
        self.column.as_ref().map_or("last_arrival", |c| c.name())
    }

    /// Largest raw value the field holds.
    pub fn max_value(&self) -> u64 {
        if self.width >= 64 {
            u64::MAX
        } else {
            (1u64 << self.width) - 1
        }
    }
}

/// Per-flow bitstring layout: one field per stateful feature, plus the
/// previous arrival time when inter-arrival features are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitLayout {
    pub fields: Vec<LayoutField>,
    pub total_bits: u32,
}

pub const ARRIVAL_BITS: u32 = 32;

fn field_for(spec: &QuantSpec) -> Option<(FieldEncoding, u32)> {
    let Some(f) = spec.column.feature() else {
        return Some((FieldEncoding::Quantized, spec.bits));
    };
    match f.kind() {
        FeatureKind::Stateless => None,
        _ if f == FeatureId::PktCount => None,
        FeatureKind::Min | FeatureKind::Max | FeatureKind::Counter => Some((FieldEncoding::Quantized, spec.bits)),
        FeatureKind::Sum | FeatureKind::Duration => {
            let w = spec.bits + spec.shift.max(0) as u32;
            Some((FieldEncoding::Accumulator, w.min(f.native_bits())))
        }
        FeatureKind::Ewma => Some((FieldEncoding::Average, f.native_bits())),
    }
}

impl BitLayout {
    /// Lays out the fields for `specs` in order. The packet count lives in
    /// the row header and stateless features are read from the packet, so
    /// neither takes space here.
    pub fn from_specs(specs: &[QuantSpec]) -> BitLayout {
        let mut fields = Vec::new();
        let mut offset = 0;
        let mut timed = false;
        for (i, spec) in specs.iter().enumerate() {
            timed |= spec
                .column
                .feature()
                .is_some_and(|f| f.is_iat() || f == FeatureId::Duration);
            if let Some((encoding, width)) = field_for(spec) {
                fields.push(LayoutField {
                    column: Some(spec.column.clone()),
                    spec: Some(i),
                    encoding,
                    offset,
                    width,
                });
                offset += width;
            }
        }
        if timed {
            fields.push(LayoutField {
                column: None,
                spec: None,
                encoding: FieldEncoding::LastArrival,
                offset,
                width: ARRIVAL_BITS,
            });
            offset += ARRIVAL_BITS;
        }
        BitLayout {
            fields,
            total_bits: offset,
        }
    }

    pub fn field(&self, column: &Column) -> Option<&LayoutField> {
        self.fields.iter().find(|f| f.column.as_ref() == Some(column))
    }

    pub fn arrival(&self) -> Option<&LayoutField> {
        self.fields.iter().find(|f| f.encoding == FieldEncoding::LastArrival)
    }

    pub fn pack(&self, values: &[u64]) -> BitString {
        assert_eq!(values.len(), self.fields.len(), "one value per field");
        let mut bits = BitString::zeros(self.total_bits);
        for (f, &v) in self.fields.iter().zip(values) {
            bits.set(f.offset, f.width, v);
        }
        bits
    }

    pub fn unpack(&self, bits: &BitString) -> Vec<u64> {
        self.fields.iter().map(|f| bits.get(f.offset, f.width)).collect()
    }
}

/// Fixed-length little-endian bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitString {
    words: Vec<u64>,
    len: u32,
}

impl BitString {
    pub fn zeros(len: u32) -> Self {
        BitString {
            words: vec![0; (len as usize).div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    /// Reads `width` bits starting at `offset`.
    pub fn get(&self, offset: u32, width: u32) -> u64 {
        assert!(width <= 64 && offset + width <= self.len, "field out of range");
        let mut out = 0u64;
        let mut done = 0;
        while done < width {
            let pos = offset + done;
            let (w, b) = ((pos / 64) as usize, pos % 64);
            let take = (64 - b).min(width - done);
            let chunk = (self.words[w] >> b) & mask(take);
            out |= chunk << done;
            done += take;
        }
        out
    }

    /// Writes the low `width` bits of `value` at `offset`.
    pub fn set(&mut self, offset: u32, width: u32, value: u64) {
        assert!(width <= 64 && offset + width <= self.len, "field out of range");
        let mut done = 0;
        while done < width {
            let pos = offset + done;
            let (w, b) = ((pos / 64) as usize, pos % 64);
            let take = (64 - b).min(width - done);
            let m = mask(take) << b;
            self.words[w] = (self.words[w] & !m) | (((value >> done) << b) & m);
            done += take;
        }
    }
}

fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::quant::quantize_spec;

    #[test]
    fn bitstring_fields_across_words() {
        let mut b = BitString::zeros(130);
        b.set(0, 7, 0x55);
        b.set(60, 13, 0x1abc);
        b.set(66, 64, u64::MAX - 5);
        assert_eq!(b.get(0, 7), 0x55);
        assert_eq!(b.get(60, 6), 0x1abc & 0x3f);
        assert_eq!(b.get(66, 64), u64::MAX - 5);
        b.set(60, 6, 0);
        assert_eq!(b.get(0, 7), 0x55);
        assert_eq!(b.get(66, 64), u64::MAX - 5);
        assert_eq!(b.get(60, 6), 0);
    }

    #[test]
    fn layout_widths() {
        let col = |f| Column::Packet(f);
        let specs = vec![
            quantize_spec(&col(FeatureId::IatMin), &[100.0, 5000.0], 0.01).unwrap(),
            quantize_spec(&col(FeatureId::LenAvg), &[100.0], 0.01).unwrap(),
            quantize_spec(&col(FeatureId::LenTotal), &[4000.0, 90000.0], 0.5).unwrap(),
            quantize_spec(&col(FeatureId::PktCount), &[3.5], 0.01).unwrap(),
            quantize_spec(&col(FeatureId::DstPort), &[442.5], 0.01).unwrap(),
        ];
        let layout = BitLayout::from_specs(&specs);
        let names: Vec<&str> = layout.fields.iter().map(|f| f.name()).collect();
        assert_eq!(names, ["iat_min", "len_avg", "len_total", "last_arrival"]);
        assert_eq!(layout.fields[0].width, specs[0].bits);
        assert_eq!(layout.fields[1].width, 16);
        assert_eq!(layout.fields[2].width, specs[2].bits + specs[2].shift as u32);
        assert_eq!(layout.total_bits, layout.fields.iter().map(|f| f.width).sum::<u32>());

        let vals = vec![3, 200, 1000, 123456];
        assert_eq!(layout.unpack(&layout.pack(&vals)), vals);
    }

    #[test]
    fn no_arrival_without_timing_features() {
        let specs = vec![quantize_spec(&Column::Packet(FeatureId::LenMax), &[99.5], 0.01).unwrap()];
        let layout = BitLayout::from_specs(&specs);
        assert!(layout.arrival().is_none());
        assert_eq!(layout.total_bits, specs[0].bits);
    }
}
