use serde::{Deserialize, Serialize};

use crate::features::{Column, FeatureKind};

/// Widest field the compiler will emit.
pub const MAX_FIELD_BITS: u32 = 63;

/// Fixed-point storage of one feature: values are kept as
/// `floor(v / 2^shift)` clamped to `bits` bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub column: Column,
    pub bits: u32,
    pub shift: i32,
    pub t_min: f64,
    pub t_max: f64,
    /// Set when the thresholds did not allow the bit-width formula and the
    /// native width was used instead.
    pub native: bool,
}

impl QuantSpec {
    pub fn max_value(&self) -> u64 {
        (1u64 << self.bits) - 1
    }

    /// Identity spec at the given width.
    pub fn exact(column: Column, bits: u32, t_min: f64, t_max: f64) -> Self {
        QuantSpec {
            column,
            bits,
            shift: 0,
            t_min,
            t_max,
            native: true,
        }
    }
}

fn native_bits(column: &Column) -> u32 {
    column.feature().map_or(32, |f| f.native_bits())
}

/// Bits and shift for a feature from the thresholds that compare against
/// it. Counters use accuracy 1 and a minimum threshold of 1; stateless
/// packet fields stay exact at their native width; non-positive thresholds
/// also fall back to the native width. Returns `None` without thresholds.
pub fn quantize_spec(column: &Column, thresholds: &[f64], accuracy: f64) -> Option<QuantSpec> {
    if thresholds.is_empty() {
        return None;
    }
    let t_min = thresholds.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = thresholds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kind = column.feature().map(|f| f.kind());
    if kind == Some(FeatureKind::Stateless) {
        return Some(QuantSpec::exact(column.clone(), native_bits(column), t_min, t_max));
    }
    let (a, lo) = if kind == Some(FeatureKind::Counter) {
        (1.0, 1.0)
    } else {
        (accuracy, t_min)
    };
    if !(lo > 0.0) || !(a > 0.0) {
        log::warn!("feature `{column}` has a non-positive threshold, stored at native width");
        return Some(QuantSpec::exact(column.clone(), native_bits(column), t_min, t_max));
    }
    let step = lo * 0.5 * a;
    let bits = ((2.0 * t_max / step).log2().floor() as i64 + 1).clamp(1, MAX_FIELD_BITS as i64) as u32;
    let shift = step.log2().floor() as i32;
    Some(QuantSpec {
        column: column.clone(),
        bits,
        shift,
        t_min,
        t_max,
        native: false,
    })
}

/// `clamp(floor(v / 2^shift), 0, 2^bits - 1)`; a negative shift scales up.
pub fn quantize_value(v: u64, spec: &QuantSpec) -> u64 {
    let scaled = if spec.shift >= 0 {
        v.checked_shr(spec.shift as u32).unwrap_or(0)
    } else {
        let k = spec.shift.unsigned_abs();
        if k >= 64 || (v != 0 && v.leading_zeros() < k) {
            u64::MAX
        } else {
            v << k
        }
    };
    scaled.min(spec.max_value())
}

/// `floor(t / 2^shift)`, clamped to `[0, 2^bits - 2]` so that a saturated
/// value still compares greater than every threshold.
pub fn quantize_threshold(t: f64, spec: &QuantSpec) -> u64 {
    let scaled = (t * 2f64.powi(-spec.shift)).floor();
    let top = spec.max_value().saturating_sub(1);
    if scaled <= 0.0 {
        0
    } else if scaled >= top as f64 {
        top
    } else {
        scaled as u64
    }
}
