//! Motif causal discovery for time series.
//!
//! The pipeline runs from raw traces to a learned directed graph over motifs:
//!
//! 1. [`trace_data`]: load, split, normalize or synthesize traces.
//! 2. [`motifs`]: chop traces into length-`tau` motifs and deduplicate them.
//! 3. [`entropy`]: histogram entropies, transfer entropy and motif causality.
//! 4. [`graph`]: the preliminary motif graph plus edge sampling and edits.
//! 5. [`gnn`] and [`training`]: the sample-and-aggregate encoder, the link
//!    predictor and the alternating train/edit loop.
//! 6. [`downstream`]: forecasting, anomaly detection and clustering with and
//!    without motif causality, plus their metrics.
//!
//! [`nn`] is the small dense-network substrate shared by every learned model.

pub mod downstream;
pub mod entropy;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod motifs;
pub mod nn;
pub mod rng;
pub mod trace_data;
pub mod training;

pub use error::{Error, ErrorKind, Result};
