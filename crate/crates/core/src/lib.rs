#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod analysis;
pub mod gaussian;
pub mod harness;
pub mod metrics;
pub mod potentials;
pub mod samplers;
