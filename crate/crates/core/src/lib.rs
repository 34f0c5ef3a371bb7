//! Benchmark toolkit for structural distribution shift on node classification.
//!
//! Graphs are loaded into a compact undirected representation, scored with a
//! structural metric, split into in-distribution and out-of-distribution
//! subsets along that score, analyzed, and used to train and evaluate a
//! propagation-based classifier.

pub mod analysis;
mod dense;
pub mod error;
pub mod eval;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod split;

pub use error::{Error, Result};
