//! Experiment harness behind the `kdpid` binary: run matrices, seed-level
//! aggregation, and SVG rendering of the resulting curves.

pub mod aggregate;
pub mod matrix;
pub mod paths;
pub mod stats;
pub mod svg;
