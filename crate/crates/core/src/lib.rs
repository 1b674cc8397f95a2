// Negated float comparisons are deliberate: NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod material;
pub mod plate;
pub mod synth;
pub mod analysis;
pub mod wav;
pub mod scene;
pub mod osc;
pub mod engine;
pub mod server;
pub mod plot;
pub mod sheet;
pub mod cli;
