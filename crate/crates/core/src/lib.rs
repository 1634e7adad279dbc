//! Context-dependent random forests for early flow classification on
//! programmable switches.
//!
//! The pipeline runs in five steps, each in its own module:
//!
//! 1. [`traffic`] parses captures and groups packets into flows.
//! 2. [`features`] computes per-subflow statistics with switch arithmetic.
//! 3. [`trainer`] picks features ([`analysis`]) and trains one forest
//!    ([`forest`]) per packet-count context.
//! 4. [`compiler`] turns the resulting classifier into table entries and a
//!    packed per-flow register layout.
//! 5. [`dataplane`] replays packets through a software model of the switch.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod compiler;
pub mod dataplane;
pub mod features;
pub mod forest;
pub mod synth;
pub mod trainer;
pub mod traffic;
