//! Link prediction on temporal co-occurrence graphs with enclosing
//! subgraphs, double-radius node labels and a DGCNN classifier, plus a
//! 15-feature topology baseline.

pub mod baseline;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod probe;
pub mod subgraph;
pub mod synthetic;

pub use error::{Error, Result};
