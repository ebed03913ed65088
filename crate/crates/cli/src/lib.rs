//! Library surface of the command-line harness: configuration, replicated
//! experiments, and the reproduction benchmarks. The `ergodens` binary is a
//! thin argument-parsing layer over these modules.

// `!(x > 0.0)`-style domain checks double as NaN rejection.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod csvout;
pub mod harness;
pub mod tables;
